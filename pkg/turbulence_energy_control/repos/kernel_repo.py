"""Repository for response kernels"""
import dataclasses
import json
import logging
import os
from typing import Any

import numpy as np
import pandas as pd

from turbulence_energy_control.models.kernels import (
    CovResponseKernel,
    KernelEstimate,
    KernelProvenance,
    MeanResponseKernel,
)

MEAN_KERNEL_FILE = "mean_kernel.csv"
COV_KERNEL_FILE = "cov_kernel.csv"
ACF_FILE = "acf.csv"
METADATA_FILE = "kernels.json"


def _lag_index(tau: np.ndarray, dtau: float) -> np.ndarray:
    return np.rint(np.asarray(tau, dtype=float) / dtau).astype(int)


# noinspection PyMethodMayBeStatic
class KernelRepository:
    """Repository for long-form kernel CSVs, the ACF table and the metadata sidecar"""

    def save(self, directory: str, estimate: KernelEstimate, save_cov_kernel: bool = True) -> list[str]:
        """Write the kernels of an estimate

        Args:
            directory (str): Output directory
            estimate (KernelEstimate): Estimated kernels with equilibrium moments
            save_cov_kernel (bool): Write the covariance kernel (N^3 rows per lag)

        Returns:
            list[str]: Paths written
        """
        os.makedirs(directory, exist_ok=True)
        paths: list[str] = []
        metadata: dict[str, Any] = {
            "mean_eq": estimate.mean_eq.tolist(),
            "cov_eq": estimate.cov_eq.tolist(),
            "decorrelation_time": None if estimate.decorrelation_time is None else estimate.decorrelation_time.tolist(),
        }

        mean_kernel = estimate.mean_kernel
        if mean_kernel is not None:
            m, k, l = np.indices(mean_kernel.values.shape)
            frame = pd.DataFrame({
                "tau": m.ravel() * mean_kernel.dtau,
                "k": k.ravel() + 1,
                "l": l.ravel() + 1,
                "value": mean_kernel.values.ravel(),
            })
            if mean_kernel.stderr is not None:
                frame["stderr"] = mean_kernel.stderr.ravel()
            paths.append(self._write(frame, directory, MEAN_KERNEL_FILE))
            metadata["mean_kernel"] = self._kernel_metadata(mean_kernel)

        cov_kernel = estimate.cov_kernel
        if cov_kernel is not None and save_cov_kernel:
            m, i, j, l = np.indices(cov_kernel.values.shape)
            upper = (i <= j).ravel()  # symmetric in (i, j)
            frame = pd.DataFrame({
                "tau": (m.ravel() * cov_kernel.dtau)[upper],
                "i": i.ravel()[upper] + 1,
                "j": j.ravel()[upper] + 1,
                "l": l.ravel()[upper] + 1,
                "value": cov_kernel.values.ravel()[upper],
            })
            if cov_kernel.stderr is not None:
                frame["stderr"] = cov_kernel.stderr.ravel()[upper]
            paths.append(self._write(frame, directory, COV_KERNEL_FILE))
            metadata["cov_kernel"] = self._kernel_metadata(cov_kernel)

        if estimate.acf is not None:
            dtau = mean_kernel.dtau if mean_kernel is not None else cov_kernel.dtau
            frame = pd.DataFrame({"tau": dtau * np.arange(estimate.acf.shape[0])})
            for n in range(estimate.acf.shape[1]):
                frame[f"acf_{n + 1}"] = estimate.acf[:, n]
            paths.append(self._write(frame, directory, ACF_FILE))

        meta_path = os.path.join(directory, METADATA_FILE)
        with open(meta_path, "w") as f:
            json.dump(metadata, f, indent=2, sort_keys=True)
            f.write("\n")
        paths.append(meta_path)
        logging.info(f"KernelRepository.save: wrote {len(paths)} files to {directory}")
        return paths

    def _write(self, frame: pd.DataFrame, directory: str, name: str) -> str:
        path = os.path.join(directory, name)
        frame.to_csv(path, index=False)
        return path

    def _kernel_metadata(self, kernel: MeanResponseKernel | CovResponseKernel) -> dict[str, Any]:
        return {
            "dtau": kernel.dtau,
            "n_lags": kernel.n_lags,
            "dim": kernel.dim,
            "provenance": dataclasses.asdict(kernel.provenance),
            "warnings": list(kernel.warnings),
        }

    def load(self, directory: str) -> KernelEstimate:
        """Read kernels written by save

        Args:
            directory (str): Directory holding kernels.json and the kernel CSVs

        Returns:
            KernelEstimate: Kernels and equilibrium moments; a kernel not on disk is None
        """
        meta_path = os.path.join(directory, METADATA_FILE)
        if not os.path.exists(meta_path):
            raise FileNotFoundError(f"No kernel metadata at {meta_path}")
        with open(meta_path) as f:
            metadata = json.load(f)

        mean_kernel = None
        if "mean_kernel" in metadata:
            info = metadata["mean_kernel"]
            frame = pd.read_csv(os.path.join(directory, MEAN_KERNEL_FILE))
            shape = (info["n_lags"], info["dim"], info["dim"])
            index = (
                _lag_index(frame["tau"], info["dtau"]),
                frame["k"].to_numpy() - 1,
                frame["l"].to_numpy() - 1,
            )
            values = np.zeros(shape)
            values[index] = frame["value"].to_numpy()
            stderr = None
            if "stderr" in frame:
                stderr = np.zeros(shape)
                stderr[index] = frame["stderr"].to_numpy()
            mean_kernel = MeanResponseKernel(
                dtau=info["dtau"],
                values=values,
                provenance=KernelProvenance(**info["provenance"]),
                stderr=stderr,
                warnings=list(info["warnings"]),
            )

        cov_kernel = None
        if "cov_kernel" in metadata:
            info = metadata["cov_kernel"]
            frame = pd.read_csv(os.path.join(directory, COV_KERNEL_FILE))
            dim = info["dim"]
            lag = _lag_index(frame["tau"], info["dtau"])
            i, j, l = (frame[c].to_numpy() - 1 for c in ("i", "j", "l"))
            values = np.zeros((info["n_lags"], dim, dim, dim))
            values[lag, i, j, l] = frame["value"].to_numpy()
            values[lag, j, i, l] = frame["value"].to_numpy()
            cov_kernel = CovResponseKernel(
                dtau=info["dtau"],
                values=values,
                provenance=KernelProvenance(**info["provenance"]),
                warnings=list(info["warnings"]),
            )

        acf = None
        acf_path = os.path.join(directory, ACF_FILE)
        if os.path.exists(acf_path):
            frame = pd.read_csv(acf_path)
            acf = frame[[c for c in frame.columns if c.startswith("acf_")]].to_numpy()

        decorrelation = metadata.get("decorrelation_time")
        logging.info(f"KernelRepository.load: loaded kernels from {directory}")
        return KernelEstimate(
            mean_eq=np.asarray(metadata["mean_eq"], dtype=float),
            cov_eq=np.asarray(metadata["cov_eq"], dtype=float),
            mean_kernel=mean_kernel,
            cov_kernel=cov_kernel,
            acf=acf,
            decorrelation_time=None if decorrelation is None else np.asarray(decorrelation, dtype=float),
        )
