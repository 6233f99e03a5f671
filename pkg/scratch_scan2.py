"""Fine scan: 6a margin (cycle-1 error gap) across misclass/jitter tweaks."""
import time
from concurrent.futures import ProcessPoolExecutor

from cald import ExperimentConfig, SelectionConfig, run_experiment

COMBOS = {
    "B":   dict(jitter_scale=0.08, temp_scale=0.5, misclass_rate=0.20, kappa=20.0),
    "B25": dict(jitter_scale=0.08, temp_scale=0.5, misclass_rate=0.25, kappa=20.0),
    "B30": dict(jitter_scale=0.08, temp_scale=0.5, misclass_rate=0.30, kappa=20.0),
    "B09": dict(jitter_scale=0.09, temp_scale=0.55, misclass_rate=0.25, kappa=20.0),
}
SEEDS = list(range(10))


def run_one(args):
    key, params, strategy, seed = args
    sel = SelectionConfig(budget_per_cycle=100, cycles=1)
    cfg = ExperimentConfig(selection=sel, **params)
    return (key, strategy, seed), run_experiment(strategy, cfg, [seed])


def main():
    tasks = [
        (name, params, strategy, seed)
        for name, params in COMBOS.items()
        for strategy in ("cald", "random")
        for seed in SEEDS
    ]
    t0 = time.time()
    results = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for key, rows in pool.map(run_one, tasks):
            results[key] = rows
    print(f"wall {time.time()-t0:.0f}s")
    for name in COMBOS:
        gaps = []
        for s in SEEDS:
            e_c = results[(name, "cald", s)][0].mean_error
            e_r = results[(name, "random", s)][0].mean_error
            gaps.append(e_c - e_r)
        wins = sum(g > 0 for g in gaps)
        import numpy as np

        print(f"{name}: 6a wins {wins}/{len(SEEDS)}  gap mean={np.mean(gaps):+.3f} "
              f"min={min(gaps):+.3f}  gaps={[f'{g:+.2f}' for g in gaps]}")


if __name__ == "__main__":
    main()
