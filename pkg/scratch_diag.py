"""Diagnose selection composition on one seed: who gets picked and why."""
import numpy as np

from cald import (
    ExperimentConfig,
    SelectionConfig,
    generate_world,
    parse_predictions,
    random_baseline,
)
from cald.pipeline import PoolState, plan_selection, score_images
from cald.simulator import SimDetectorModel, _detector_error, _oracle_counts, predictions_lines

SEED = 1
PARAMS = dict(jitter_scale=0.08, temp_scale=0.5, misclass_rate=0.2)
KAPPA = 20.0

sel = SelectionConfig(budget_per_cycle=100, cycles=1)
world = generate_world(2000, 10, 1.0, SEED)
manifest = world.manifest(sel.augmentations)
all_ids = world.image_ids
empty = PoolState(labeled={}, unlabeled=set(all_ids))
init_ids = random_baseline(empty, 100, SEED)
pool = PoolState(
    labeled=_oracle_counts(world, manifest, init_ids),
    unlabeled=set(all_ids) - set(init_ids),
)
counts = pool.labeled_counts(10)
skills = counts / (counts + KAPPA)
print("labeled counts:", counts)
print("skills:", np.round(skills, 3))

model = SimDetectorModel.from_label_counts(counts, kappa=KAPPA, **PARAMS)
lines = predictions_lines(world, model, sel.augmentations, 12345)
preds = parse_predictions(lines, manifest)
scores = score_images(preds, all_ids, sel)

# per-class profile: for images containing class c, metric stats
unlabeled = sorted(pool.unlabeled)
cls_of = {i: [o.class_id for o in world.image(i).objects] for i in all_ids}
for c in range(10):
    with_c = [i for i in unlabeled if c in cls_of[i]]
    ms = np.array([scores[i].metric for i in with_c])
    print(f"class {c} skill={skills[c]:.2f} n_img={len(with_c):4d} "
          f"metric mean={ms.mean():.3f} p10={np.percentile(ms, 10):.3f}")

record, _ = plan_selection(pool, preds, sel, 10, scores=scores)
cald_sel = [r.image_id for r in record.final]
rand_sel = random_baseline(pool, 100, 999)

def profile(name, ids):
    obj_cls = np.concatenate([cls_of[i] for i in ids])
    hist = np.bincount(obj_cls, minlength=10)
    err = _detector_error(world, preds, ids, sel.retention_threshold)
    m = np.mean([scores[i].metric for i in ids])
    print(f"{name}: err={err:.3f} meanM={m:.3f} objs/class={hist}")

profile("cald  ", cald_sel)
profile("random", rand_sel)
profile("stage1-top100",
        [s.image_id for s in sorted((scores[i] for i in unlabeled), key=lambda s: (s.metric, s.image_id))[:100]])

# error by class: мean per-object error for images containing mostly class c
from cald.pipeline import retained
per_cls_err = np.zeros(10); per_cls_n = np.zeros(10)
for i in unlabeled[:800]:
    img = world.image(i)
    ps = retained(preds[i].original, 0.1)
    import cald._kernels as K
    if ps:
        gt = np.stack([o.box.as_array() for o in img.objects])
        pb = np.stack([p.box.as_array() for p in ps])
        ious = K.iou_matrix(gt, pb)
    for t, o in enumerate(img.objects):
        if ps:
            j = ious[t].argmax()
            v = ious[t, j]
            e = (1 - v) + (int(np.argmax(ps[j].scores)) != o.class_id if v > 0 else 1.0)
        else:
            e = 2.0
        per_cls_err[o.class_id] += e
        per_cls_n[o.class_id] += 1
print("per-object error by class:", np.round(per_cls_err / np.maximum(per_cls_n, 1), 3))
