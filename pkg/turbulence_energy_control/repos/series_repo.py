"""Repository for time-series CSV artifacts"""
import json
import logging
import os

import numpy as np
import pandas as pd

from turbulence_energy_control.models.control import ControlSolution
from turbulence_energy_control.models.forcing import ForcingSolution
from turbulence_energy_control.models.moments import MomentSeries


def _columns(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{k}" for k in range(1, n + 1)]


def _frame(times: np.ndarray, blocks: dict[str, np.ndarray]) -> pd.DataFrame:
    """One row per time point; 1-D blocks become one column, 2-D blocks one column per mode."""
    data: dict[str, np.ndarray] = {"t": np.asarray(times, dtype=float)}
    for name, block in blocks.items():
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            data[name] = block
        else:
            data.update(zip(_columns(name, block.shape[1]), block.T))
    return pd.DataFrame(data)


# noinspection PyMethodMayBeStatic
class SeriesRepository:
    """Repository for moments, control, forcing and empirical-control series"""

    def _write(self, frame: pd.DataFrame, directory: str, name: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        frame.to_csv(path, index=False)
        logging.debug(f"SeriesRepository._write: {len(frame)} rows to {path}")
        return path

    def save_moments(self, directory: str, label: str, series: MomentSeries, save_covariance: bool = True) -> list[str]:
        """Write moments_<label>.csv and, optionally, the long-form cov_<label>.csv

        Columns are t, E, E_pert, mean_1..N, var_1..N, then E_stderr.

        Args:
            directory (str): Run directory
            label (str): Strategy label or "uncontrolled"
            series (MomentSeries): Series to write
            save_covariance (bool): Also write every R_ij with i <= j

        Returns:
            list[str]: Paths written
        """
        frame = _frame(series.times, {
            "E": series.energy,
            "E_pert": series.energy_pert,
            "mean": series.mean,
            "var": series.variance,
            "E_stderr": series.energy_stderr,
        })
        paths = [self._write(frame, directory, f"moments_{label}.csv")]
        if save_covariance:
            n_t, dim = series.mean.shape
            upper_i, upper_j = np.triu_indices(dim)
            cov = pd.DataFrame({
                "t": np.repeat(series.times, upper_i.size),
                "i": np.tile(upper_i + 1, n_t),
                "j": np.tile(upper_j + 1, n_t),
                "R_ij": series.cov[:, upper_i, upper_j].ravel(),
            })
            paths.append(self._write(cov, directory, f"cov_{label}.csv"))
        return paths

    def read_moments(self, path: str) -> pd.DataFrame:
        return pd.read_csv(path)

    def save_control(self, directory: str, solution: ControlSolution) -> str:
        """control.csv with t, K, E_star, C_1..C_N, dC_1..dC_N"""
        frame = _frame(solution.times, {"K": solution.K, "E_star": solution.E_star, "C": solution.C, "dC": solution.dC})
        return self._write(frame, directory, "control.csv")

    def save_optimal_energy(self, directory: str, solution: ControlSolution) -> str:
        """energy_optimal.csv: the optimal E* path in the column layout of the measured series"""
        return self._write(_frame(solution.times, {"E_pert": solution.E_star}), directory, "energy_optimal.csv")

    def save_forcing(self, directory: str, forcing: ForcingSolution) -> list[str]:
        """forcing_<label>.csv with t, kappa_1..N, du_1..N plus the diagnostics JSON

        Args:
            directory (str): Output directory
            forcing (ForcingSolution): Inversion result

        Returns:
            list[str]: CSV and diagnostics paths
        """
        label = forcing.strategy.label
        frame = _frame(forcing.times, {"kappa": forcing.kappa, "du": forcing.mean_resp})
        csv_path = self._write(frame, directory, f"forcing_{label}.csv")
        json_path = os.path.join(directory, f"forcing_{label}_diagnostics.json")
        with open(json_path, "w") as f:
            json.dump({"strategy": label, **forcing.diagnostics.to_dict()}, f, indent=2, sort_keys=True)
            f.write("\n")
        return [csv_path, json_path]

    def read_forcing(self, path: str) -> tuple[np.ndarray, np.ndarray]:
        """Times and kappa columns of a forcing CSV"""
        frame = pd.read_csv(path)
        kappa = frame[[c for c in frame.columns if c.startswith("kappa_")]].to_numpy()
        return frame["t"].to_numpy(), kappa

    def save_empirical_control(self, directory: str, label: str, times: np.ndarray, controls: np.ndarray) -> str:
        """empirical_control_<label>.csv with the realized C_k(t) of a controlled run"""
        return self._write(_frame(times, {"C": controls}), directory, f"empirical_control_{label}.csv")
