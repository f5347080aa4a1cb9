import json, time
import numpy as np
from pathlib import Path
from dataclasses import replace
from capflow.netgen import GeneratorConfig
from capflow.workbench.dataset import build_dataset, load_manifest
from capflow.workbench.training import TrainConfig, train, prepare_graphs
from capflow.workbench.evaluation import evaluate
from capflow.surrogate import GnnConfig, feature_scales_for
from capflow.fileio import read_graph

root = Path('/root/pkg/.experiments/run1')
gen = GeneratorConfig(seed=2024)   # desk default ~120 nodes, 10-15 inlets
t0 = time.time()
mpath = build_dataset(gen, 250, (0.8, 0.1, 0.1), 'both', root / 'ds')
print(f'dataset: {time.time()-t0:.0f}s', flush=True)
man = load_manifest(mpath)

pairs = [read_graph(man.root / e.graph) for e in man.split('train')]
scales = feature_scales_for(pairs)
print('scales:', scales, flush=True)

cfg = GnnConfig(variant=1, latent_dim=16, message_steps=20, skip_period=3,
                block_hidden_layers=1, seed=11,
                pressure_scale=scales.pressure, diameter_scale=scales.diameter,
                length_scale=scales.length)
tc = TrainConfig(seed=11, max_epochs=150)
t0 = time.time()
gnn, log = train(man, tc, cfg, out_dir=root / 'v1')
print(f'train: {(time.time()-t0)/60:.1f} min, {len(log.epochs)} epochs, stop: {log.stop_reason}', flush=True)
rep = evaluate(man, 'test', gnn, time_solver=False)
print('TEST ERRORS:', json.dumps(rep.mean_errors), flush=True)
print('val curve (every 10):', [round(e['val_loss'],6) for e in log.epochs[::10]], flush=True)
