"""Instrumented meta-training: gradient norms, loss trajectory, and periodic
held-out-target adaptation probes."""
import sys, time
import torch
torch.set_num_threads(2)
from collections import OrderedDict
from simbandit.config import RunConfig, TrainerConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import Registry, build_model
from simbandit.tasks import CacheStore, generate_task
from simbandit.meta import (task_batches, inner_update, batch_loss, clone_params,
                            task_meta_gradient, _sample_task_ids)
from simbandit.study import random_simulator_state

WORK = "/root/pkg/.pilot/work1"
cfg = RunConfig.from_dict({
    "dataset": "desk16", "seed": 7,
    "data": {"n_train": 3000, "n_eval": 120},
})
spec = get_spec("desk16")
data = make_dataset(cfg.dataset, cfg.data.n_train, cfg.data.n_eval, cfg.seed)
registry = Registry.load(f"{WORK}/registry.json")
cache = CacheStore(f"{WORK}/cache", "desk16")
target = registry.load_model("cnn-d2-w12")
init_state = random_simulator_state("cnn-d3-w16", "desk16", derive_seed(cfg.seed, "simulator-init"))
backbone = build_model("cnn-d3-w16", spec)

probe_tasks = [task_batches(generate_task(target, data.eval_x[k], int(data.eval_y[k]),
               cfg.attack, V=100, split_t=50, seed=1000 + k)) for k in range(6)]

def probe(theta):
    post = []
    for mtr, mte in probe_tasks:
        th = inner_update(backbone, theta, mtr, 0.01, 12)
        post.append(float(batch_loss(backbone, th, mte).detach()))
    return sum(post) / len(post)

K, lam1, lam2, T = 5, 0.01, 0.001, 12
theta = clone_params(init_state)
all_ids = cache.task_ids()
print(f"step 0 probe {probe(theta):.4f}", flush=True)
t0 = time.time()
for step in range(400):
    ids = _sample_task_ids(all_ids, K, derive_seed(123, "meta-step", step))
    accum = OrderedDict((k, torch.zeros_like(v)) for k, v in theta.items())
    losses = []
    for tid in ids:
        mtr, mte = task_batches(cache.read_task(tid))
        grads, loss = task_meta_gradient(backbone, theta, tid, mtr, mte, lam1, T)
        for k in accum: accum[k] += grads[k]
        losses.append(loss)
    gnorm = torch.sqrt(sum((v / K).pow(2).sum() for v in accum.values()))
    theta = OrderedDict((k, (v - lam2 * accum[k] / K).detach().requires_grad_(True))
                        for k, v in theta.items())
    if step % 10 == 0 or step < 5:
        print(f"step {step+1:4d} loss {sum(losses)/K:8.4f} |g| {float(gnorm):9.3f} "
              f"({time.time()-t0:.0f}s)", flush=True)
    if step % 50 == 49:
        print(f"   == probe after step {step+1}: {probe(theta):.4f}", flush=True)
print("final probe:", probe(theta), flush=True)
