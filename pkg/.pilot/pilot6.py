"""Flattened teachers (smoothing 0.45) + controlled GD vanilla.
Measures FD sign agreement and |l1-l2| magnitude ratio per variant."""
import time
import torch
torch.set_num_threads(2)
from collections import OrderedDict
from simbandit.config import RunConfig, TrainerConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import build_model, load_checkpoint
from simbandit.tasks import CacheStore, generate_and_cache
from simbandit.meta import train_simulator, train_vanilla, clone_params
from simbandit.study import random_simulator_state
from simbandit.zoo import train_zoo
from simbandit.harness import run_campaign
from simbandit.metrics import aggregate
from simbandit.oracle import CountingOracle
from simbandit import attack_core as core
from simbandit.sim_attack import should_query_target, fine_tune, FineTuneSchedule, QueryEntry
from torch.func import functional_call
from collections import deque

WORK = "/root/pkg/.pilot/work6"
cfg = RunConfig.from_dict({
    "dataset": "desk16", "seed": 7,
    "data": {"n_train": 3000, "n_eval": 150},
    "zoo": {"label_smoothing": 0.45},
    "tasks": {"count": 200, "V": 100, "split_t": 50},
    "trainer": {"K": 10, "total_tasks": 2000},
    "eval": {"n_images": 60, "seeds": [0, 1]},
})
t0 = time.time()
say = lambda m: print(f"[{time.time()-t0:7.1f}s] {m}", flush=True)
spec = get_spec("desk16")
data = make_dataset(cfg.dataset, cfg.data.n_train, cfg.data.n_eval, cfg.seed)
say("zoo ...")
registry = train_zoo(f"{WORK}/registry.json", cfg.dataset, data,
    pool=cfg.zoo.pool, target=cfg.zoo.target, epochs=cfg.zoo.epochs,
    batch_size=cfg.zoo.batch_size, lr=cfg.zoo.lr,
    accuracy_floor=cfg.zoo.accuracy_floor, seed=cfg.seed,
    label_smoothing=cfg.zoo.label_smoothing)
say("tasks ...")
cache = CacheStore(f"{WORK}/cache", cfg.dataset)
generate_and_cache(registry, cache, data, cfg.attack, count=200, V=100,
                   split_t=50, seed=derive_seed(cfg.seed, "gen-tasks"))
say("meta ...")
backbone = build_model(cfg.zoo.simulator_backbone, spec)
init_state = random_simulator_state(cfg.zoo.simulator_backbone, cfg.dataset,
                                    derive_seed(cfg.seed, "simulator-init"))
meta_state, entries = train_simulator(build_model(cfg.zoo.simulator_backbone, spec),
    init_state, cache, cfg.trainer, seed=derive_seed(cfg.seed, "train-simulator", "meta"))
say(f"meta loss {entries[0]['mean_meta_test_loss']:.3f} -> {entries[-1]['mean_meta_test_loss']:.3f}")
van_gd = train_vanilla(build_model(cfg.zoo.simulator_backbone, spec), init_state,
                       cache, cfg.trainer, seed=derive_seed(cfg.seed, "train-simulator", "vanilla"))
van_adam = train_vanilla(build_model(cfg.zoo.simulator_backbone, spec), init_state,
                         cache, cfg.trainer, optimizer="adam",
                         seed=derive_seed(cfg.seed, "train-simulator", "vanilla"))
say("vanillas done")

variants = {"meta": meta_state, "vanilla-gd": van_gd, "vanilla-adam": van_adam,
            "random": init_state}
target = registry.load_model(registry.ids("target")[0])
images = data.eval_x[:cfg.eval.n_images]
labels = data.eval_y[:cfg.eval.n_images]

# FD-quality probe: run the sim attack loop manually on a few images,
# recording sign agreement and magnitude ratio of l1-l2 vs the target's.
def fd_probe(state, n_img=10, seed=123):
    agree = 0; total = 0; ratios = []
    atk = cfg.attack
    for k in range(n_img):
        y = int(labels[k])
        if core.predicted_class(target.forward(images[k:k+1])[0]) != y: continue
        gen = torch.Generator().manual_seed(derive_seed(seed, k))
        x = images[k].clone(); x_adv = x.clone(); g = torch.zeros_like(x)
        params = clone_params(state)
        hist = deque(maxlen=atk.deque_len)
        sched = FineTuneSchedule(lr=0.01)
        first = True
        for i in range(1, 61):
            u, q1, q2 = core._draw_pair(g, atk.tau, gen)
            img1 = x_adv + atk.delta * q1; img2 = x_adv + atk.delta * q2
            tgt = target.forward(torch.stack([img1, img2]))
            tl1 = core.margin_loss(tgt[0], y); tl2 = core.margin_loss(tgt[1], y)
            if should_query_target(i, atk.warmup_t, atk.sim_interval_m):
                hist.append(QueryEntry(img1, tgt[0])); hist.append(QueryEntry(img2, tgt[1]))
                if i >= atk.warmup_t:
                    params = fine_tune(backbone, params, list(hist),
                                       sched.steps(first, gen), 0.01)
                    first = False
                l1, l2 = tl1, tl2
            else:
                with torch.no_grad():
                    sim = functional_call(backbone, params, (torch.stack([img1, img2]),))
                l1 = core.margin_loss(sim[0], y); l2 = core.margin_loss(sim[1], y)
                total += 1
                agree += ((l1 - l2) > 0) == ((tl1 - tl2) > 0)
                if abs(tl1 - tl2) > 1e-9:
                    ratios.append(abs(l1 - l2) / abs(tl1 - tl2))
            dg = core.finite_difference_grad(l1, l2, u, atk.tau, atk.delta)
            g = core.gd_prior_update(g, dg, atk.eta_g)
            try:
                x_adv = core.step_and_project(x_adv, x, g, atk)
            except core.ZeroGradientPrior:
                pass
    ratios.sort()
    med = ratios[len(ratios)//2] if ratios else float("nan")
    return agree / max(total, 1), med

for vname, vstate in variants.items():
    sa, mr = fd_probe(vstate)
    say(f"fd-probe {vname:<13} sign-agreement {sa:.3f} |l1-l2| ratio median {mr:.3f}")

for vname, vstate in variants.items():
    rows = []
    for s in cfg.eval.seeds:
        traces = run_campaign("simulator", target, images, labels, cfg.attack,
                              derive_seed(cfg.seed, "eval", s),
                              backbone=backbone, sim_state=vstate)
        agg = aggregate(traces)
        rows.append(f"seed{s} {agg.avg_query:.2f}/{agg.success_rate:.2f}")
    say(f"sim-{vname:<13} " + "  ".join(rows))
for s in cfg.eval.seeds:
    traces = run_campaign("bandits", target, images, labels, cfg.attack,
                          derive_seed(cfg.seed, "eval", s))
    agg = aggregate(traces)
    say(f"bandits seed{s} {agg.avg_query:.2f}/{agg.success_rate:.2f}")
