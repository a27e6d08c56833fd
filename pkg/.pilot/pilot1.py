import sys, time, json
import torch
torch.set_num_threads(2)
from simbandit.config import RunConfig
from simbandit.study import run_study, study_table
from simbandit.metrics import aggregate

cfg = RunConfig.from_dict({
    "dataset": "desk16",
    "seed": 7,
    "data": {"n_train": 3000, "n_eval": 120},
    "zoo": {},
    "tasks": {"count": 200, "V": 100, "split_t": 50},
    "trainer": {"K": 10, "total_tasks": 500, "inner_T": 12},
    "eval": {"n_images": 50, "seeds": [0]},
})

t0 = time.time()
res = run_study(cfg, "/root/pkg/.pilot/work1", diagnostics=True,
                progress=lambda m: print(f"[{time.time()-t0:7.1f}s] {m}", flush=True))
print(study_table(res, cfg.eval.seeds), flush=True)
for method in res.traces:
    agg = aggregate(res.traces[method][0])
    print(method, "avg:", agg.avg_query, "median:", agg.median_query,
          "sr:", agg.success_rate, flush=True)
for v in ("sim-meta", "sim-vanilla", "sim-random"):
    print(v, "pooled MSE:", res.pooled_mse(v), flush=True)
m, r = res.matched_mse("sim-meta", "sim-random")
print("matched meta vs random MSE:", m, r, flush=True)
print("total time:", time.time()-t0, flush=True)
