"""Retrieval error scalings of the finite-depth solver.

(a) At zero spin decay, 1 - efficiency against optical depth, with the
    constant c of a c / sqrt(depth) law fitted per depth.
(b) At depth 20, retrieval loss against gamma_c * tau_r on a grid of
    (gamma_c, coupling), with the Spearman rank correlation.
"""

import argparse

import numpy as np
from scipy.stats import spearmanr

from ensemble_memory.core import ExperimentConfig, SpinWaveProfile
from ensemble_memory.retrieval import retrieve_finite_depth

DEPTHS = (10, 20, 50, 100, 200)
GAMMAS = (0.05, 0.1, 0.2, 0.4, 0.8)
COUPLINGS = (0.05, 0.1, 0.2, 0.4, 0.8)


def depth_scaling(coupling: float = 0.2, depths=DEPTHS, **solver) -> list[tuple[float, float, float]]:
    """Rows (depth, 1 - efficiency, (1 - efficiency) * sqrt(depth)) at gamma_c = 0."""
    profile = SpinWaveProfile.uniform(1.0)
    rows = []
    for d in depths:
        cfg = ExperimentConfig(optical_depth=d, decoherence_rate=0.0, retrieve_coupling=coupling)
        loss = 1.0 - retrieve_finite_depth(profile, cfg, **solver).efficiency
        rows.append((d, loss, loss * np.sqrt(d)))
    return rows


def decay_scaling(depth: float = 20.0, gammas=GAMMAS, couplings=COUPLINGS, **solver):
    """Rows (gamma_c, coupling, tau_r, gamma_c * tau_r, loss) and Spearman rho."""
    profile = SpinWaveProfile.uniform(1.0)
    rows = []
    for g in gammas:
        for k in couplings:
            cfg = ExperimentConfig(optical_depth=depth, decoherence_rate=g, retrieve_coupling=k)
            result = retrieve_finite_depth(profile, cfg, **solver)
            rows.append((g, k, result.retrieval_time, g * result.retrieval_time, 1.0 - result.efficiency))
    arr = np.array(rows)
    rho = spearmanr(arr[:, 3], arr[:, 4]).statistic
    return rows, float(rho)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cells", type=int, default=512)
    args = parser.parse_args()

    print("depth  1-eff     c=(1-eff)*sqrt(depth)")
    rows = depth_scaling(cells=args.cells)
    for d, loss, c in rows:
        print(f"{d:5g}  {loss:.5f}   {c:.4f}")
    cs = np.array([r[2] for r in rows])
    print(f"c spread max/min = {cs.max() / cs.min():.3f}")

    print("\ngamma_c coupling tau_r   gamma_c*tau_r  loss")
    grid, rho = decay_scaling(cells=args.cells)
    for g, k, tau, x, loss in grid:
        print(f"{g:6.2f} {k:6.2f} {tau:7.3f} {x:10.4f}  {loss:.4f}")
    print(f"Spearman rho = {rho:.4f}")


if __name__ == "__main__":
    main()
