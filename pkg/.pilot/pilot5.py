"""Validation at acceptance scale: the exact STUDY_CONFIG, 100 images x 5 seeds."""
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
    "eval": {"n_images": 100, "seeds": [0, 1, 2, 3, 4]},
})

t0 = time.time()
res = run_study(cfg, "/root/pkg/.pilot/work5", diagnostics=True,
                progress=lambda m: print(f"[{time.time()-t0:7.1f}s] {m}", flush=True))
print(study_table(res, cfg.eval.seeds), flush=True)
wins7 = wins8 = 0
for s in cfg.eval.seeds:
    meta = aggregate(res.traces["sim-meta"][s])
    van = aggregate(res.traces["sim-vanilla"][s])
    rnd = aggregate(res.traces["sim-random"][s])
    ban = aggregate(res.traces["bandits"][s])
    ok7 = meta.avg_query <= van.avg_query and meta.avg_query <= rnd.avg_query
    ok8 = (meta.avg_query <= 0.9 * ban.avg_query
           and abs(meta.success_rate - ban.success_rate) <= 0.05)
    wins7 += ok7; wins8 += ok8
    print(f"seed{s}: meta {meta.avg_query:.3f} van {van.avg_query:.3f} "
          f"rnd {rnd.avg_query:.3f} ban {ban.avg_query:.2f} "
          f"ok7={ok7} ok8={ok8}", flush=True)
m, r = res.matched_mse("sim-meta", "sim-random")
print(f"criterion7 wins {wins7}/5; criterion8 wins {wins8}/5; "
      f"MSE meta {m:.4f} vs random {r:.4f}", flush=True)
print("total", round(time.time()-t0, 1), flush=True)
