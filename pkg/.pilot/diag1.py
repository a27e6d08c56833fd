"""Where does vanilla save queries? Claims vs detection timing, seed 0."""
import time
import torch
torch.set_num_threads(2)
from simbandit.config import RunConfig, derive_seed
from simbandit.data import make_dataset, get_spec
from simbandit.zoo import Registry, build_model, load_checkpoint
from simbandit.harness import run_campaign, correctly_classified_mask

WORK = "/root/pkg/.pilot/work5"
cfg = RunConfig.from_dict({
    "dataset": "desk16", "seed": 7,
    "data": {"n_train": 3000, "n_eval": 150},
    "eval": {"n_images": 100, "seeds": [0]},
})
spec = get_spec("desk16")
data = make_dataset(cfg.dataset, cfg.data.n_train, cfg.data.n_eval, cfg.seed)
registry = Registry.load(f"{WORK}/registry.json")
target = registry.load_model(registry.ids("target")[0])
backbone = build_model(cfg.zoo.simulator_backbone, spec)
images = data.eval_x[:100]
labels = data.eval_y[:100]
campaign_seed = derive_seed(cfg.seed, "eval", 0)

stats = {}
per_image = {}
for variant in ("meta", "vanilla", "random"):
    state = load_checkpoint(f"{WORK}/simulator-{variant}.ckpt").state
    traces = run_campaign("simulator", target, images, labels, cfg.attack,
                          campaign_seed, backbone=backbone, sim_state=state)
    claims = 0          # sim-iteration confirmation queries that failed
    sim_detects = 0     # successes verified at a sim-served iteration
    tgt_detects = 0     # successes verified at a target-served iteration
    total_q = 0
    n_att = 0
    for t in traces:
        if not t.attempted:
            continue
        n_att += 1
        total_q += t.queries_used
        prev = 0
        for rec in t.records:
            spent = rec.cum_queries - prev
            prev = rec.cum_queries
            if rec.oracle == "simulator" and spent >= 1:
                claims += 1
        if t.success and t.records:
            if t.records[-1].oracle == "simulator":
                sim_detects += 1
            else:
                tgt_detects += 1
        per_image.setdefault(t.image_id, {})[variant] = (
            t.queries_used, t.iterations, t.success)
    stats[variant] = (total_q / n_att, claims, sim_detects, tgt_detects)
    print(f"{variant:<8} avg {total_q / n_att:7.2f} sim-iter-confirms {claims:4d} "
          f"detected@sim {sim_detects:3d} detected@target {tgt_detects:3d}", flush=True)

print("\nimages where variants differ (meta vs vanilla):")
diffs = []
for img, row in per_image.items():
    if "meta" in row and "vanilla" in row and row["meta"][0] != row["vanilla"][0]:
        diffs.append((img, row["meta"], row["vanilla"]))
print(f"count={len(diffs)}")
for img, m, v in diffs[:12]:
    print(f"  img {img}: meta q={m[0]} it={m[1]}  vanilla q={v[0]} it={v[1]}")
