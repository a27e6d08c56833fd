"""Stability matrix: teacher smoothing x pooling type -> meta-grad spikes."""
import sys, time
import torch
torch.set_num_threads(2)
from collections import OrderedDict
from torch import nn
from simbandit.config import AttackConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import build_model, init_params_, LoadedClassifier, accuracy
from simbandit.tasks import generate_task
from simbandit.meta import (task_batches, inner_update, batch_loss, clone_params,
                            task_meta_gradient)

POOL_KIND = sys.argv[1] if len(sys.argv) > 1 else "max"   # max|avg
SMOOTH = float(sys.argv[2]) if len(sys.argv) > 2 else 0.1

spec = get_spec("desk16")
data = make_dataset("desk16", 3000, 300, seed=7)
atk = AttackConfig.for_norm("l2")

def patch_pool():
    if POOL_KIND == "avg":
        import simbandit.zoo as zoo
        zoo.nn_pool = nn.AvgPool2d
        # monkey-patch ConvClassifier construction
        orig = zoo.ConvClassifier.__init__
        def patched(self, depth, width, in_channels, class_count, image_hw):
            nn.Module.__init__(self)
            h, w = image_hw
            layers = []
            prev, chan = in_channels, width
            for _ in range(depth):
                layers += [nn.Conv2d(prev, chan, 3, padding=1), nn.ReLU(),
                           nn.AvgPool2d(2)]
                prev, chan = chan, chan * 2
            self.features = nn.Sequential(*layers)
            self.head = nn.Linear(prev * (h >> depth) * (w >> depth), class_count)
        zoo.ConvClassifier.__init__ = patched
patch_pool()

def train(arch, seed):
    gen = torch.Generator().manual_seed(seed)
    model = build_model(arch, spec); init_params_(model, gen)
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    loss_fn = nn.CrossEntropyLoss(label_smoothing=SMOOTH)
    n = len(data.train_x)
    for _ in range(6):
        order = torch.randperm(n, generator=gen)
        for i in range(0, n, 128):
            idx = order[i:i+128]
            opt.zero_grad(); loss_fn(model(data.train_x[idx]), data.train_y[idx]).backward(); opt.step()
    model.eval()
    return model

pool_archs = ["cnn-d1-w8", "cnn-d1-w16", "cnn-d2-w8", "cnn-d2-w16", "cnn-d3-w8", "cnn-d3-w12"]
models = {}
for i, arch in enumerate(pool_archs):
    m = train(arch, 100 + i)
    acc = accuracy(m, data.eval_x, data.eval_y)
    with torch.no_grad():
        scale = float(m(data.eval_x[:64]).abs().max())
    models[arch] = LoadedClassifier(arch, m, spec)
    print(f"{arch} acc {acc:.3f} scale {scale:.1f}", flush=True)

# 60 tasks round-robin over pool
tasks = []
gen = torch.Generator().manual_seed(5)
for k in range(60):
    arch = pool_archs[k % len(pool_archs)]
    idx = int(torch.randint(len(data.train_x), (1,), generator=gen))
    t = generate_task(models[arch], data.train_x[idx], int(data.train_y[idx]),
                      atk, V=100, split_t=50, seed=7000 + k)
    tasks.append(task_batches(t))

target = train("cnn-d2-w12", 999)
tlc = LoadedClassifier("cnn-d2-w12", target, spec)
probe_tasks = [task_batches(generate_task(tlc, data.eval_x[k], int(data.eval_y[k]),
               atk, V=100, split_t=50, seed=8000 + k)) for k in range(6)]

backbone = build_model("cnn-d3-w16", spec)
init_params_(backbone, torch.Generator().manual_seed(42))
init = clone_params(backbone.state_dict())

def probe(theta):
    return sum(float(batch_loss(backbone, inner_update(backbone, theta, mtr, 0.01, 12), mte).detach())
               for mtr, mte in probe_tasks) / len(probe_tasks)

print("probe@init", round(probe(init), 4), flush=True)
theta = init
K, lam2 = 5, 0.001
gmax = 0.0
t0 = time.time()
order_gen = torch.Generator().manual_seed(77)
for step in range(120):
    ids = torch.randperm(len(tasks), generator=order_gen)[:K]
    accum = OrderedDict((k, torch.zeros_like(v)) for k, v in theta.items())
    losses = []
    for i in ids:
        mtr, mte = tasks[int(i)]
        grads, loss = task_meta_gradient(backbone, theta, str(int(i)), mtr, mte, 0.01, 12)
        for k in accum: accum[k] += grads[k]
        losses.append(loss)
    gnorm = float(torch.sqrt(sum((v / K).pow(2).sum() for v in accum.values())))
    gmax = max(gmax, gnorm)
    theta = OrderedDict((k, (v - lam2 * accum[k] / K).detach().requires_grad_(True))
                        for k, v in theta.items())
    if step % 20 == 0:
        print(f"step {step+1:4d} loss {sum(losses)/K:8.4f} |g| {gnorm:9.3f} gmax {gmax:9.3f} ({time.time()-t0:.0f}s)", flush=True)
    if step % 40 == 39:
        print(f"   probe@{step+1}: {probe(theta):.4f}", flush=True)
print("final probe:", round(probe(theta), 4), "gmax:", round(gmax, 2), flush=True)
