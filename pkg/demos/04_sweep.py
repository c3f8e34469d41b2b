"""A resumable ground-state sweep over a small (h_s, h_d) grid.

Records go to ``sweep_demo/``; killing the script and running it again only
computes the missing grid points. The aggregated table is a heat-map CSV.
"""

from dipolar_ladder.model import SystemParams
from dipolar_ladder.sweep import SweepGrid, SweepResultStore, aggregate_phase_table, execute, plan, write_phase_table


def main():
    grid = SweepGrid(
        axes=[("h_s", [0.2, 0.6, 1.0, 1.4, 1.8]), ("h_d", [-20.0, -12.0, -8.0, -2.0])],
        base=SystemParams(L=16, C=0.5),
        task_type="ground_state",
        config={"chi_max": 32},
    )
    store = SweepResultStore("sweep_demo", grid)
    todo = plan(grid, store)
    print(f"{len(todo)} of {grid.size} grid points left")
    execute(todo, store, workers=2)

    rows = aggregate_phase_table(store)
    write_phase_table(rows, "sweep_demo/phase_table.csv")
    for r in rows:
        print(f"h_s={r['h_s']:.1f} h_d={r['h_d']:6.1f}  |sz|={r['abs_sz']:.3f} |dz|={r['abs_dz']:.3f}  "
              f"{r['phase_d']}{r['phase_s']}")


if __name__ == "__main__":
    main()
