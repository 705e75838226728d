"""Statistical energy control of quadratic energy-conserving turbulent systems"""
