"""Probe: which (lambda2, outer_steps, K) make the meta-trained simulator
adapt to a held-out target better than random/vanilla inits."""
import sys, time, json
import torch
torch.set_num_threads(2)
from simbandit.config import RunConfig, TrainerConfig, AttackConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import Registry, build_model, init_params_
from simbandit.tasks import CacheStore, generate_task
from simbandit.meta import (train_simulator, train_vanilla, task_batches,
                            inner_update, batch_loss, clone_params)
from simbandit.study import random_simulator_state

WORK = "/root/pkg/.pilot/work1"
cfg = RunConfig.from_dict({
    "dataset": "desk16", "seed": 7,
    "data": {"n_train": 3000, "n_eval": 120},
    "tasks": {"count": 200, "V": 100, "split_t": 50},
})
spec = get_spec("desk16")
data = make_dataset(cfg.dataset, cfg.data.n_train, cfg.data.n_eval, cfg.seed)
registry = Registry.load(f"{WORK}/registry.json")
cache = CacheStore(f"{WORK}/cache", "desk16")
print("cache tasks:", len(cache))

target = registry.load_model("cnn-d2-w12")
init_state = random_simulator_state("cnn-d3-w16", "desk16", derive_seed(cfg.seed, "simulator-init"))
backbone = build_model("cnn-d3-w16", spec)

# Held-out probe tasks: query sequences against the TARGET (diagnostic only)
atk = cfg.attack
probe_tasks = []
for k in range(8):
    t = generate_task(target, data.eval_x[k], int(data.eval_y[k]), atk,
                      V=100, split_t=50, seed=1000 + k)
    probe_tasks.append(task_batches(t))

def probe_adaptation(state, label):
    theta = clone_params(state)
    pre, post = [], []
    for mtr, mte in probe_tasks:
        pre.append(float(batch_loss(backbone, theta, mte).detach()))
        th = inner_update(backbone, theta, mtr, 0.01, 12)
        post.append(float(batch_loss(backbone, th, mte).detach()))
    print(f"{label:<28} pre-adapt {sum(pre)/len(pre):8.4f}   post-adapt {sum(post)/len(post):8.4f}")
    return sum(post)/len(post)

probe_adaptation(init_state, "random init")

t0 = time.time()
van = train_vanilla(build_model("cnn-d3-w16", spec), init_state, cache,
                    TrainerConfig(K=10, total_tasks=500), seed=1)
probe_adaptation(van, f"vanilla (500 visits, {time.time()-t0:.0f}s)")

for lam2, K, total in [(0.001, 10, 500), (0.01, 5, 500), (0.03, 5, 500), (0.01, 5, 1500)]:
    t0 = time.time()
    tc = TrainerConfig(lambda2=lam2, K=K, total_tasks=total)
    state, entries = train_simulator(build_model("cnn-d3-w16", spec), init_state,
                                     cache, tc, seed=2)
    first = entries[0]["mean_meta_test_loss"]; last = entries[-1]["mean_meta_test_loss"]
    probe_adaptation(state, f"meta l2={lam2} steps={tc.outer_steps} ({time.time()-t0:.0f}s) [{first:.2f}->{last:.2f}]")
