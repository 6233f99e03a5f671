"""Validate all trend criteria with the unbiased eval draw, 8 seeds."""
import time
from concurrent.futures import ProcessPoolExecutor

from cald import ExperimentConfig, SelectionConfig, run_experiment

COMBOS = {
    "B09": dict(jitter_scale=0.09, temp_scale=0.55, misclass_rate=0.25, kappa=20.0),
}
SEEDS = list(range(12))


def run_one(args):
    key, params, strategy, sel_kwargs, cycles, seed = args
    sel = SelectionConfig(budget_per_cycle=100, cycles=cycles, **sel_kwargs)
    cfg = ExperimentConfig(selection=sel, **params)
    return (key, strategy, seed), run_experiment(strategy, cfg, [seed])


def main():
    tasks = []
    for name, params in COMBOS.items():
        for key, strategy, sel_kwargs, cycles in [
            (name, "cald", {}, 3),
            (name, "random", {}, 2),
            (name + "/st1", "cald", {"expansion_ratio": 0.0}, 2),
            (name, "cald_beta:2.0", {}, 1),
        ]:
            for seed in SEEDS:
                tasks.append((key, params, strategy, sel_kwargs, cycles, seed))
    t0 = time.time()
    results = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for key, rows in pool.map(run_one, tasks):
            results[key] = rows
    print(f"scan wall time: {time.time() - t0:.0f}s for {len(tasks)} runs")

    def get(key, strategy, seed, cycle, attr):
        for r in results[(key, strategy, seed)]:
            if r.cycle == cycle:
                return getattr(r, attr)
        return float("nan")

    for name in COMBOS:
        print(f"== combo {name} {COMBOS[name]}")
        ok = {k: 0 for k in ("6a", "5r", "5s", "7", "6b", "6c", "8")}
        for s in SEEDS:
            e_cald1 = get(name, "cald", s, 1, "mean_error")
            e_cald3 = get(name, "cald", s, 3, "mean_error")
            e_rand = get(name, "random", s, 1, "mean_error")
            e_b2 = get(name, "cald_beta:2.0", s, 1, "mean_error")
            b_cald = get(name, "cald", s, 2, "balance_js")
            b_rand = get(name, "random", s, 2, "balance_js")
            b_st1 = get(name + "/st1", "cald", s, 2, "balance_js")
            ok["6a"] += e_cald1 > e_rand
            ok["5r"] += b_cald <= b_rand
            ok["5s"] += b_cald <= b_st1
            ok["8"] += b_cald <= b_st1
            ok["7"] += e_b2 < e_cald1
            ok["6b"] += all(
                get(name, "cald", s, c, "mean_M_selected")
                < get(name, "cald", s, c, "mean_M_labeled")
                for c in (1, 2, 3)
            )
            ok["6c"] += e_cald3 < e_cald1
            print(f"  seed{s}: err c1={e_cald1:.3f} c3={e_cald3:.3f} rand={e_rand:.3f} "
                  f"b2={e_b2:.3f} | bal cald={b_cald:.4f} rand={b_rand:.4f} st1={b_st1:.4f}")
        n = len(SEEDS)
        print("  " + "  ".join(f"{k}:{v}/{n}" for k, v in ok.items()))


if __name__ == "__main__":
    main()
