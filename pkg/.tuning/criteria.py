"""Check every trend criterion on a candidate benchmark config."""
import sys, time
import numpy as np
from splitgnn.experiments import ExperimentConfig, run_experiment

SEEDS = [0, 1, 2, 3, 4]

def make_syn(deg=2.0, fsig=0.2, hom=0.9, na=700, nb=470, fdim=32, classes=3):
    return {
        "node_counts": {"a": na, "b": nb},
        "relations": [
            {"name": "aa", "src_type": "a", "dst_type": "a", "edge_dim": 2, "avg_degree": deg, "symmetric": True},
            {"name": "ab", "src_type": "a", "dst_type": "b", "edge_dim": 2, "avg_degree": deg/2},
            {"name": "ba", "src_type": "b", "dst_type": "a", "edge_dim": 2, "avg_degree": deg/2},
        ],
        "feature_dim": fdim, "num_classes": classes, "homophily": hom,
        "feature_signal": fsig, "train_frac": 0.5, "val_frac": 0.2,
    }

BASE = dict(data_seed=1, participants=2, ratio=[5.0,5.0], model="hat",
            seeds=SEEDS, batch_size=128, epochs=8, learning_rate=0.02,
            optimizer="adam", hidden=16, layers=2, heads=2, server_dropout=0.3)

def final_f1(strategy, syn, **kw):
    merged = {**BASE, "synthetic": syn, "strategy": strategy, **kw}
    rows, _, _ = run_experiment(ExperimentConfig.from_json(merged))
    out = {}
    for r in rows:
        out[r.seed] = r.test_f1
    return out

def main(deg, fsig, hom):
    syn = make_syn(deg=deg, fsig=fsig, hom=hom)
    t0 = time.perf_counter()
    ent = final_f1("entire", syn)
    spc = final_f1("split_c", syn)
    spm = final_f1("split_m", syn)
    sa  = final_f1("standalone_0", syn)
    sb  = final_f1("standalone_1", syn)
    t1 = time.perf_counter()
    print(f"[t1 grid {t1-t0:.0f}s]")
    print("entire  ", {s: round(v,3) for s,v in ent.items()})
    print("split_c ", {s: round(v,3) for s,v in spc.items()})
    print("split_m ", {s: round(v,3) for s,v in spm.items()})
    print("stand_0 ", {s: round(v,3) for s,v in sa.items()})
    print("stand_1 ", {s: round(v,3) for s,v in sb.items()})
    c6 = sum(1 for s in SEEDS if ent[s] >= spc[s]-0.01 and spc[s] >= max(sa[s],sb[s])-0.01)
    print(f"criterion6 (entire>=split_c>=standalone, slack .01): {c6}/5")
    c10 = np.mean(list(spc.values())) >= np.mean(list(spm.values())) - 0.01
    print(f"criterion10 (split_c >= split_m - .01 on means): {c10}")

    # criterion 7: I in {2,4,8}
    f1_by_I = {}
    for I in (2,4,8):
        f1_by_I[I] = final_f1("split_c", syn, participants=I, ratio=[1.0]*I)
    t2 = time.perf_counter()
    print(f"[t2 grid {t2-t1:.0f}s]")
    for I in (2,4,8):
        print(f"I={I}", {s: round(v,3) for s,v in f1_by_I[I].items()},
              "mean", round(np.mean(list(f1_by_I[I].values())),3))
    c7 = sum(1 for s in SEEDS if f1_by_I[2][s] >= f1_by_I[4][s] >= f1_by_I[8][s])
    c7s = sum(1 for s in SEEDS if f1_by_I[2][s] >= f1_by_I[4][s] - 0.005 >= f1_by_I[8][s] - 0.01)
    print(f"criterion7 (non-increasing in I): strict {c7}/5")

    # criterion 8: ratios
    f1_by_r = {}
    for r in ([5.0,5.0],[3.0,7.0],[1.0,9.0]):
        f1_by_r[tuple(r)] = final_f1("split_c", syn, ratio=r)
    t3 = time.perf_counter()
    print(f"[t3 grid {t3-t2:.0f}s]")
    for r, vals in f1_by_r.items():
        print(r, {s: round(v,3) for s,v in vals.items()}, "mean", round(np.mean(list(vals.values())),3))
    c8 = sum(1 for s in SEEDS
             if f1_by_r[(1.0,9.0)][s] >= f1_by_r[(3.0,7.0)][s] >= f1_by_r[(5.0,5.0)][s])
    print(f"criterion8 (1:9 >= 3:7 >= 5:5): strict {c8}/5")
    print(f"total {time.perf_counter()-t0:.0f}s")

if __name__ == "__main__":
    deg, fsig, hom = float(sys.argv[1]), float(sys.argv[2]), float(sys.argv[3])
    main(deg, fsig, hom)
