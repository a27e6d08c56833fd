"""Mixture-prototype dataset: does attack difficulty create query separation
between simulator variants? Includes FD sign-agreement diagnostics."""
import time
import torch
torch.set_num_threads(2)
from collections import OrderedDict
from torch import nn
from simbandit.config import AttackConfig, TrainerConfig, derive_seed
from simbandit.data import DatasetSpec
from simbandit.zoo import build_model, init_params_, LoadedClassifier, accuracy
from simbandit.tasks import generate_task, CacheStore, TaskDataset
from simbandit.meta import (task_batches, clone_params, _sample_task_ids,
                            task_meta_gradient, train_vanilla, batch_loss, inner_update)
from simbandit.oracle import CountingOracle
from simbandit.sim_attack import simulator_attack
from simbandit.attack_core import bandits_attack, predicted_class, margin_loss
import simbandit.attack_core as core

spec = DatasetSpec("desk16", 10, 3, 16, 16, center_scale=1.5, noise_sigma=0.1)
PROTOS_PER_CLASS = 2

def make_mixture(seed, n_train, n_eval):
    gen = torch.Generator().manual_seed(seed)
    coarse = torch.randn(spec.class_count * PROTOS_PER_CLASS, spec.channels, 4, 4, generator=gen)
    smooth = torch.nn.functional.interpolate(coarse, size=(16, 16), mode="bilinear", align_corners=False)
    dirs = smooth.reshape(len(coarse), -1)
    dirs = dirs / dirs.norm(dim=1, keepdim=True)
    protos = (0.5 + spec.center_scale * dirs).clamp(0.02, 0.98).reshape(
        spec.class_count, PROTOS_PER_CLASS, 3, 16, 16)
    def split(n, s):
        g = torch.Generator().manual_seed(s)
        y = torch.arange(n) % spec.class_count
        y = y[torch.randperm(n, generator=g)]
        which = torch.randint(PROTOS_PER_CLASS, (n,), generator=g)
        x = protos[y, which] + spec.noise_sigma * torch.randn(n, 3, 16, 16, generator=g)
        return x.clamp(0, 1), y
    tx, ty = split(n_train, seed + 1)
    ex, ey = split(n_eval, seed + 2)
    return tx, ty, ex, ey

tx, ty, ex, ey = make_mixture(500, 4000, 150)

def train(arch, seed, epochs=8):
    gen = torch.Generator().manual_seed(seed)
    model = build_model(arch, spec); init_params_(model, gen)
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    loss_fn = nn.CrossEntropyLoss(label_smoothing=0.2)
    for _ in range(epochs):
        order = torch.randperm(len(tx), generator=gen)
        for i in range(0, len(tx), 128):
            idx = order[i:i+128]
            opt.zero_grad(); loss_fn(model(tx[idx]), ty[idx]).backward(); opt.step()
    model.eval()
    return LoadedClassifier(arch, model, spec)

t0 = time.time()
pool_archs = ["cnn-d1-w8", "cnn-d1-w16", "cnn-d2-w8", "cnn-d2-w16", "cnn-d3-w8", "cnn-d3-w12"]
pool = {}
for i, arch in enumerate(pool_archs):
    pool[arch] = train(arch, 100 + i)
    print(f"[{time.time()-t0:6.1f}s] {arch} acc {accuracy(pool[arch].module, ex, ey):.3f}", flush=True)
target = train("cnn-d2-w12", 999)
print(f"[{time.time()-t0:6.1f}s] target acc {accuracy(target.module, ex, ey):.3f}", flush=True)

atk = AttackConfig.for_norm("l2")
# quick probe: how long do bandit attacks take now?
qs = []
for k in range(12):
    oracle = CountingOracle(target.forward, 10)
    y = int(ey[k])
    if predicted_class(target.forward(ex[k:k+1])[0]) != y: continue
    tr = bandits_attack(oracle, ex[k], y, atk, seed=50 + k)
    qs.append((tr.queries_used, tr.success))
print(f"[{time.time()-t0:6.1f}s] bandits probe: {qs}", flush=True)

# cache 150 tasks
cache = CacheStore("/root/pkg/.pilot/work3/cache", "desk16")
gen = torch.Generator().manual_seed(5)
for k in range(150):
    arch = pool_archs[int(torch.randint(len(pool_archs), (1,), generator=gen))]
    idx = int(torch.randint(len(tx), (1,), generator=gen))
    task = generate_task(pool[arch], tx[idx], int(ty[idx]), atk, V=100, split_t=50, seed=9000 + k)
    cache.write_task(f"{k:05d}-{arch}", task)
print(f"[{time.time()-t0:6.1f}s] cached 150 tasks", flush=True)

backbone = build_model("cnn-d3-w16", spec)
init_params_(backbone, torch.Generator().manual_seed(42))
init_state = OrderedDict((k, v.detach().clone()) for k, v in backbone.state_dict().items())

# meta-train K=10, 150 steps
theta = clone_params(init_state)
all_ids = cache.task_ids()
K, lam2 = 10, 0.001
for step in range(150):
    ids = _sample_task_ids(all_ids, K, derive_seed(123, "meta-step", step))
    accum = OrderedDict((k, torch.zeros_like(v)) for k, v in theta.items())
    losses = []
    for tid in ids:
        mtr, mte = task_batches(cache.read_task(tid))
        grads, loss = task_meta_gradient(backbone, theta, tid, mtr, mte, 0.01, 12)
        for k2 in accum: accum[k2] += grads[k2]
        losses.append(loss)
    theta = OrderedDict((k2, (v - lam2 * accum[k2] / K).detach().requires_grad_(True))
                        for k2, v in theta.items())
    if step % 30 == 0:
        print(f"[{time.time()-t0:6.1f}s] meta step {step+1} loss {sum(losses)/K:.4f}", flush=True)
meta_state = OrderedDict((k, v.detach().clone()) for k, v in theta.items())
print(f"[{time.time()-t0:6.1f}s] meta-trained", flush=True)

van_state = train_vanilla(build_model("cnn-d3-w16", spec), init_state, cache,
                          TrainerConfig(K=10, total_tasks=1500), seed=1)
print(f"[{time.time()-t0:6.1f}s] vanilla trained", flush=True)

variants = {"meta": meta_state, "vanilla": van_state, "random": init_state}

# attacks with sign-agreement diagnostics
class SignProbe:
    def __init__(self): self.agree = {v: [0, 0] for v in variants}; self.mse = {v: [] for v in variants}

probe = SignProbe()
results = {}
for vname, vstate in variants.items():
    traces = []
    for k in range(40):
        y = int(ey[k])
        if predicted_class(target.forward(ex[k:k+1])[0]) != y: continue
        oracle = CountingOracle(target.forward, 10)
        tr = simulator_attack(oracle, backbone, vstate, ex[k], y, atk,
                              seed=derive_seed(77, "atk", k),
                              diag_forward=target.forward)
        traces.append(tr)
        for (it, err) in tr.diagnostics:
            probe.mse[vname].append(err)
    qlist = [t.queries_used for t in traces if t.success]
    sr = sum(t.success for t in traces) / len(traces)
    results[vname] = (sum(qlist) / len(qlist), sr, len(traces))
    print(f"[{time.time()-t0:6.1f}s] sim-{vname}: avg {results[vname][0]:.2f} sr {sr:.3f} "
          f"mse {sum(probe.mse[vname])/max(len(probe.mse[vname]),1):.4f}", flush=True)

btr = []
for k in range(40):
    y = int(ey[k])
    if predicted_class(target.forward(ex[k:k+1])[0]) != y: continue
    oracle = CountingOracle(target.forward, 10)
    tr = bandits_attack(oracle, ex[k], y, atk, seed=derive_seed(77, "atk", k))
    btr.append(tr)
bq = [t.queries_used for t in btr if t.success]
print(f"[{time.time()-t0:6.1f}s] bandits: avg {sum(bq)/len(bq):.2f} sr {sum(t.success for t in btr)/len(btr):.3f}", flush=True)
