"""Full pilot with the stabilized recipe: smoothing 0.2 teachers, K=10,
200 outer steps; 2 eval seeds, 60 images; all four methods + diagnostics."""
import time
import torch
torch.set_num_threads(2)
from simbandit.config import RunConfig
from simbandit.study import run_study, study_table
from simbandit.metrics import aggregate

cfg = RunConfig.from_dict({
    "dataset": "desk16",
    "seed": 7,
    "data": {"n_train": 3000, "n_eval": 150},
    "tasks": {"count": 200, "V": 100, "split_t": 50},
    "trainer": {"K": 10, "total_tasks": 2000},
    "eval": {"n_images": 60, "seeds": [0, 1]},
})

t0 = time.time()
res = run_study(cfg, "/root/pkg/.pilot/work2", diagnostics=True,
                progress=lambda m: print(f"[{time.time()-t0:7.1f}s] {m}", flush=True))
print(study_table(res, cfg.eval.seeds), flush=True)
for method in res.traces:
    for s in cfg.eval.seeds:
        agg = aggregate(res.traces[method][s])
        print(f"{method} seed{s}: avg {agg.avg_query:.2f} med {agg.median_query}"
              f" max {agg.max_query} sr {agg.success_rate:.3f}", flush=True)
m, r = res.matched_mse("sim-meta", "sim-random")
print("matched MSE meta vs random:", round(m, 4), round(r, 4), flush=True)
m, v = res.matched_mse("sim-meta", "sim-vanilla")
print("matched MSE meta vs vanilla:", round(m, 4), round(v, 4), flush=True)
print("total", round(time.time()-t0, 1), flush=True)
