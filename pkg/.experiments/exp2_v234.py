import json, time
import numpy as np
from pathlib import Path
from capflow.workbench.dataset import load_manifest
from capflow.workbench.training import TrainConfig, train
from capflow.workbench.evaluation import evaluate
from capflow.surrogate import GnnConfig, feature_scales_for
from capflow.fileio import read_graph

root = Path('/root/pkg/.experiments/run1')
man = load_manifest(root / 'ds' / 'manifest.json')
pairs = [read_graph(man.root / e.graph) for e in man.split('train')]
scales = feature_scales_for(pairs)

for variant in (2, 3, 4):
    cfg = GnnConfig(variant=variant, latent_dim=16, message_steps=20, skip_period=3,
                    block_hidden_layers=1, seed=11,
                    pressure_scale=scales.pressure, diameter_scale=scales.diameter,
                    length_scale=scales.length)
    tc = TrainConfig(seed=11, max_epochs=200)
    t0 = time.time()
    gnn, log = train(man, tc, cfg, out_dir=root / f'v{variant}')
    rep = evaluate(man, 'test', gnn, time_solver=False)
    print(f'V{variant}: {(time.time()-t0)/60:.1f} min, {len(log.epochs)} ep ({log.stop_reason}); '
          f'errors: {json.dumps(rep.mean_errors)}', flush=True)
    if rep.physics_residuals:
        print(f'   physics: {json.dumps(rep.physics_residuals)}', flush=True)
