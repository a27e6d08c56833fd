"""E1: per-task meta-grad norm distribution at init.
E2: K=10 lambda2=1e-3 long run with periodic held-out probes.
E3: attack comparison with the trained theta."""
import sys, time
import torch
torch.set_num_threads(2)
from collections import OrderedDict
from simbandit.config import RunConfig, TrainerConfig, AttackConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import Registry, build_model
from simbandit.tasks import CacheStore, generate_task
from simbandit.meta import (task_batches, inner_update, batch_loss, clone_params,
                            task_meta_gradient, _sample_task_ids)
from simbandit.study import random_simulator_state

WORK = "/root/pkg/.pilot/work1"
cfg = RunConfig.from_dict({"dataset": "desk16", "seed": 7,
                           "data": {"n_train": 3000, "n_eval": 120}})
spec = get_spec("desk16")
data = make_dataset(cfg.dataset, cfg.data.n_train, cfg.data.n_eval, cfg.seed)
registry = Registry.load(f"{WORK}/registry.json")
cache = CacheStore(f"{WORK}/cache", "desk16")
target = registry.load_model("cnn-d2-w12")
init_state = random_simulator_state("cnn-d3-w16", "desk16", derive_seed(cfg.seed, "simulator-init"))
backbone = build_model("cnn-d3-w16", spec)

# E1: spike anatomy over first 80 tasks at init
theta0 = clone_params(init_state)
norms = []
t0 = time.time()
for tid in cache.task_ids()[:80]:
    mtr, mte = task_batches(cache.read_task(tid))
    try:
        g, loss = task_meta_gradient(backbone, theta0, tid, mtr, mte, 0.01, 12)
        n = float(torch.sqrt(sum(v.pow(2).sum() for v in g.values())))
        norms.append((n, loss, tid))
    except Exception as e:
        norms.append((float("inf"), float("inf"), tid))
norms.sort(reverse=True)
vals = [n for n, _, _ in norms if n != float("inf")]
import statistics
print(f"E1 ({time.time()-t0:.0f}s): n={len(vals)} median={statistics.median(vals):.1f} "
      f"p90={sorted(vals)[int(0.9*len(vals))]:.1f} top5={[round(n,1) for n,_,_ in norms[:5]]}",
      flush=True)
print("top tasks:", [(tid, round(n,1)) for n, l, tid in norms[:5]], flush=True)

# E2: K=10 long run
probe_tasks = [task_batches(generate_task(target, data.eval_x[k], int(data.eval_y[k]),
               cfg.attack, V=100, split_t=50, seed=1000 + k)) for k in range(6)]

def probe(theta):
    return sum(float(batch_loss(backbone, inner_update(backbone, theta, mtr, 0.01, 12), mte).detach())
               for mtr, mte in probe_tasks) / len(probe_tasks)

K, lam2 = 10, 0.001
theta = clone_params(init_state)
all_ids = cache.task_ids()
print(f"E2 start probe {probe(theta):.4f}", flush=True)
t0 = time.time()
gmax = 0.0
for step in range(200):
    ids = _sample_task_ids(all_ids, K, derive_seed(123, "meta-step", step))
    accum = OrderedDict((k, torch.zeros_like(v)) for k, v in theta.items())
    losses = []
    bad = False
    for tid in ids:
        mtr, mte = task_batches(cache.read_task(tid))
        try:
            grads, loss = task_meta_gradient(backbone, theta, tid, mtr, mte, 0.01, 12)
        except Exception as e:
            print(f"  DIVERGED at step {step+1} task {tid}: {e}", flush=True)
            bad = True
            break
        for k in accum: accum[k] += grads[k]
        losses.append(loss)
    if bad:
        break
    gnorm = float(torch.sqrt(sum((v / K).pow(2).sum() for v in accum.values())))
    gmax = max(gmax, gnorm)
    theta = OrderedDict(((k, (v - lam2 * accum[k] / K).detach().requires_grad_(True))
                        for k, v in theta.items()))
    if step % 25 == 0:
        print(f"step {step+1:4d} loss {sum(losses)/K:8.4f} |g| {gnorm:9.3f} gmax {gmax:9.1f} ({time.time()-t0:.0f}s)", flush=True)
    if step % 50 == 49:
        print(f"   probe@{step+1}: {probe(theta):.4f}", flush=True)
print(f"E2 done ({time.time()-t0:.0f}s) final probe: {probe(theta):.4f} gmax {gmax:.1f}", flush=True)

torch.save({k: v.detach() for k, v in theta.items()}, "/root/pkg/.pilot/theta_e2.pt")
print("saved theta_e2.pt", flush=True)
