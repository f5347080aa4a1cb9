import json, time
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

for kv, variant, epochs in ((2.5, 3, 100), (2.5, 2, 100), (8.0, 3, 100)):
    cfg = GnnConfig(variant=variant, latent_dim=16, message_steps=20, skip_period=3,
                    block_hidden_layers=1, seed=11, k_v=kv,
                    pressure_scale=scales.pressure, diameter_scale=scales.diameter,
                    length_scale=scales.length)
    t0 = time.time()
    gnn, log = train(man, TrainConfig(seed=11, max_epochs=epochs), cfg,
                     out_dir=root / f'v{variant}_kv{kv}')
    rep = evaluate(man, 'test', gnn, time_solver=False)
    print(f'V{variant} kv={kv}: {(time.time()-t0)/60:.1f} min ({log.stop_reason}); '
          f'P_L2={rep.mean_errors["pressure"]["L2"]:.2f}% '
          f'v_L2={rep.mean_errors["velocity"]["L2"]:.2f}%', flush=True)
