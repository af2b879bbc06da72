"""Run the receding-horizon loop on the desk scenario in every mode and compare.

Usage::

    python demos/closed_loop.py
"""
from clusterplan import Mode, builtin_scenario, count_binaries, run_receding_horizon


def main() -> None:
    scn = builtin_scenario("desk")
    print(f"{'mode':<14}{'binaries':>9}{'steps':>7}{'cost':>10}{'time [s]':>10}{'nodes':>7}")
    for mode in (Mode.unclustered(), Mode.clustered(2), Mode.clustered(3)):
        trace = run_receding_horizon(scn, mode=mode)
        print(f"{mode.label:<14}{count_binaries(mode, scn.Ns, scn.n_obstacles):>9}{len(trace.steps):>7}"
              f"{trace.closed_loop_cost:>10.4f}{trace.total_solve_time:>10.2f}{trace.total_nodes:>7}")
        for prev, cur in zip(trace.steps, trace.steps[1:]):
            assert cur.J_star <= prev.J_hat_next + 1e-6


if __name__ == "__main__":
    main()
