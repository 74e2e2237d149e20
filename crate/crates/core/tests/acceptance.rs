//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use lcfc::clustering::{self, kmedoids, medoid_cost, Backend, BackendConfig};
use lcfc::data::{self, SynthKind};
use lcfc::distance::{assemble, field_oracle, real_oracle, rmse, GlobalDistanceMatrix, Provenance};
use lcfc::experiment::{self, BenchConfig, ExperimentConfig};
use lcfc::federation::{self, PartitionMode, PartitionSpec, ProtocolConfig, ProtocolOutput};
use lcfc::field::{FieldParams, MERSENNE_61};
use lcfc::lcc::{default_nodes, threshold, CodingScheme, NoiseMode};
use lcfc::metrics::{hungarian, kappa, nmi, NmiNorm};
use lcfc::privacy::{audit, AuditConfig};
use lcfc::quantize::{real_to_field, DequantExponent};
use lcfc::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn protocol(rows: &[Vec<f64>], labels: Option<&[usize]>, mode: PartitionMode, scheme: &CodingScheme, seed: u64, noise_seed: u64) -> Result<ProtocolOutput, Error> {
    let spec = PartitionSpec { mode, m: scheme.m(), seed };
    let cfg = ProtocolConfig { scheme: scheme.clone(), noise: NoiseMode::Seeded(noise_seed), dequant: DequantExponent::TwoQ };
    federation::reconstruct(rows, labels, &spec, &cfg)
}

fn iris_config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig { out: dir.to_path_buf(), ..Default::default() }
}

fn exact_field_reconstruction() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for case in 0..50 {
        let d = [3, 8, 17][rng.random_range(0..3)];
        let l = [1, 2, 4][rng.random_range(0..3)];
        let t = rng.random_range(1..=2);
        let m = threshold(l, t) + if rng.random_bool(0.5) { 0 } else { 4 };
        // The small prime only has room for a few quantization levels.
        let (p, q, range) = if rng.random_bool(0.5) { (MERSENNE_61, 16, 10.0) } else { (10007, 2, 2.0) };
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..d).map(|_| rng.random_range(-range..=range)).collect()).collect();
        let params = FieldParams::new(p, q).map_err(err)?;
        let scheme = CodingScheme::new(params, m, l, t).map_err(err)?;
        let out = protocol(&rows, None, PartitionMode::EvenIid, &scheme, case, case).map_err(err)?;
        let quantized = rows.iter().map(|r| real_to_field(r, &params)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let oracle = field_oracle(&quantized, &params);
        ensure(out.decoded == oracle, || format!("case {case} (d={d} l={l} t={t} m={m} p={p}) differs from the field oracle"))?;
    }
    Ok("50/50 configurations bit-exact".into())
}

fn real_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = iris_config(dir.path());
    let (_, iris_rmse, _) = experiment::reconstruct_only(&cfg).map_err(err)?;
    ensure(iris_rmse <= 1e-3, || format!("Iris RMSE {iris_rmse:e} > 1e-3"))?;

    let scheme = CodingScheme::new(FieldParams::default(), 3, 1, 1).map_err(err)?;
    let mut synth = Vec::new();
    for n in [150, 1000] {
        let ds = data::synth(SynthKind::Blobs, n, 3, 0, 1.0).map_err(err)?;
        let out = protocol(&ds.features, None, PartitionMode::EvenIid, &scheme, 0, 0).map_err(err)?;
        synth.push(rmse(&out.matrix, &real_oracle(&ds.features)).map_err(err)?);
    }
    let ratio = synth[0].max(synth[1]) / synth[0].min(synth[1]);
    ensure(ratio <= 2.0, || format!("synthetic RMSE {:e} vs {:e}, ratio {ratio:.2} > 2", synth[0], synth[1]))?;
    Ok(format!("Iris RMSE {iris_rmse:.3e}; synthetic n=150 {:.3e}, n=1000 {:.3e}", synth[0], synth[1]))
}

fn distribution_invariance() -> Outcome {
    let ds = data::iris().normalized(data::Normalization::Unit);
    let labels = ds.labels.as_deref();
    let scheme = ExperimentConfig::default().scheme(ds.num_classes()).map_err(err)?;
    let noise_seed = 0;
    let mut reference: Option<GlobalDistanceMatrix> = None;
    let modes = [
        PartitionMode::LabelSkew(0.0),
        PartitionMode::LabelSkew(0.5),
        PartitionMode::LabelSkew(1.0),
        PartitionMode::Dirichlet(0.001),
        PartitionMode::Dirichlet(1000.0),
    ];
    for mode in modes {
        // Near-zero concentration can leave a client empty; the partition
        // seed is advanced until every client holds data. Noise stays fixed.
        let out = (0..64)
            .map(|seed| protocol(&ds.features, labels, mode, &scheme, seed, noise_seed))
            .find(|r| !matches!(r, Err(Error::EmptyClient { .. })))
            .expect("64 partition seeds tried")
            .map_err(err)?;
        match &reference {
            None => reference = Some(out.matrix),
            Some(r) => ensure(r.as_slice() == out.matrix.as_slice(), || format!("{mode:?} changes D"))?,
        }
    }
    Ok("5 partitions, identical D".into())
}

fn iris_parity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = iris_config(dir.path());
    cfg.set("backends", "sc,km,fcm,nmf").map_err(err)?;
    cfg.set("sweep_p", "0,0.5,1").map_err(err)?;
    cfg.compare_oracle = true;
    let (record, _) = experiment::run(&cfg).map_err(err)?;
    let mut summary = Vec::new();
    let first = &record.runs[0].backends;
    for run in &record.runs {
        for b in &run.backends {
            let (k, n) = (b.kappa.unwrap(), b.nmi.unwrap());
            let name = b.backend.name();
            ensure(k >= 0.90 && k <= 1.0, || format!("{name} Kappa {k:.3} at {:?}", run.partition))?;
            ensure(n >= 0.85, || format!("{name} NMI {n:.3} at {:?}", run.partition))?;
            if b.backend == Backend::Sc {
                ensure(b.oracle_kappa == b.kappa, || format!("SC Kappa {k} differs from oracle {:?}", b.oracle_kappa))?;
            }
            let same = first.iter().find(|f| f.backend == b.backend).unwrap();
            ensure(same.kappa == b.kappa && same.nmi == b.nmi, || format!("{name} changes across p"))?;
        }
    }
    for b in first {
        summary.push(format!("{} {:.2}/{:.2}", b.backend.name(), b.kappa.unwrap(), b.nmi.unwrap()));
    }
    Ok(format!("Kappa/NMI {}; constant over p in {{0, 0.5, 1}}", summary.join(", ")))
}

fn generality_backends() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = iris_config(dir.path());
    cfg.set("backends", "hc,kmed,dbscan").map_err(err)?;
    cfg.set_backend("dbscan", "eps", "0.01").map_err(err)?;
    cfg.set_backend("dbscan", "min_pts", "5").map_err(err)?;
    let (record, _) = experiment::run(&cfg).map_err(err)?;
    let mut summary = Vec::new();
    for b in &record.runs[0].backends {
        let k = b.kappa.unwrap();
        let ok = match b.backend {
            Backend::Hc => k >= 0.90,
            Backend::Kmed => k >= 0.89,
            Backend::Dbscan => (0.40..=0.60).contains(&k),
            _ => true,
        };
        ensure(ok, || format!("{} Kappa {k:.3}", b.backend.name()))?;
        summary.push(format!("{} {k:.2}", b.backend.name()));
    }
    Ok(format!("Kappa {}", summary.join(", ")))
}

fn feasibility_gate() -> Outcome {
    let cfg = ExperimentConfig::default();
    let ds = cfg.load_dataset().map_err(err)?;
    let params = FieldParams::new(cfg.p, cfg.q).map_err(err)?;
    let oracle = real_oracle(&ds.features);
    let quantized = ds.features.iter().map(|r| real_to_field(r, &params)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let floor_matrix = assemble(ds.n(), &field_oracle(&quantized, &params), &params, cfg.dequant).map_err(err)?;
    let floor = rmse(&floor_matrix, &oracle).map_err(err)?;

    let cells = experiment::feasibility_sweep(&cfg, &ds, &oracle).map_err(err)?;
    ensure(cells.len() == 13 * 16, || format!("{} cells", cells.len()))?;
    let (mut refused, mut ok) = (0, 0);
    for c in &cells {
        let compliant = c.m >= threshold(c.l, c.t);
        ensure(c.feasible == compliant, || format!("(m={}, l={}, t={}) classified wrongly", c.m, c.l, c.t))?;
        if compliant {
            let r = c.rmse.unwrap();
            ensure(r == floor, || format!("(m={}, l={}, t={}) RMSE {r:e} vs floor {floor:e}", c.m, c.l, c.t))?;
            ok += 1;
        } else {
            // The protocol itself refuses before any message is produced.
            let (alpha, beta) = default_nodes(c.m, c.l, c.t);
            let refused_early = match CodingScheme::with_nodes(params, c.m, c.l, c.t, &alpha, &beta) {
                Err(e) => matches!(e, Error::InfeasibleScheme { .. }),
                Ok(s) => matches!(protocol(&ds.features, None, PartitionMode::EvenIid, &s, 0, 0), Err(Error::InfeasibleScheme { .. })),
            };
            ensure(refused_early, || format!("(m={}, l={}, t={}) not refused before the protocol", c.m, c.l, c.t))?;
            refused += 1;
        }
    }
    Ok(format!("{refused} cells refused, {ok} reconstruct at the quantization floor {floor:.3e}"))
}

fn privacy_audit() -> Outcome {
    let mut cfg = AuditConfig::new(31, 1, 1, 5, 1);
    for j in 0..5 {
        cfg.colluders = vec![j];
        let r = audit(&cfg).map_err(err)?;
        ensure(r.mi_bits == 0.0, || format!("client {j}: {} bits", r.mi_bits))?;
    }
    let no_noise = audit(&AuditConfig::new(31, 1, 0, 5, 1)).map_err(err)?;
    let log31 = 31f64.log2();
    ensure((no_noise.mi_bits - log31).abs() < 1e-9, || format!("t=0 gives {} bits, expected {log31}", no_noise.mi_bits))?;
    let pair = audit(&AuditConfig::new(31, 1, 1, 5, 2)).map_err(err)?;
    ensure(pair.mi_bits > 0.0, || "two colluders leak nothing".into())?;
    Ok(format!("single client 0 bits; t=0 {:.4} bits; two colluders {:.4} bits", no_noise.mi_bits, pair.mi_bits))
}

fn segmentation_speedup() -> Outcome {
    let cfg = BenchConfig { repeats: 3, ..Default::default() };
    let rows = experiment::bench(&cfg).map_err(err)?;
    let times: Vec<f64> = rows.iter().map(|r| r.client_distance_s).collect();
    let text = rows.iter().map(|r| format!("l={} {:.3}s", r.l, r.client_distance_s)).collect::<Vec<_>>().join(", ");
    ensure(times.windows(2).all(|w| w[1] < w[0]), || format!("not strictly decreasing: {text}"))?;
    Ok(format!("distance phase {text}"))
}

fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost[0].len();
    let n = rows.max(cols);
    let at = |r: usize, c: usize| if r < rows && c < cols { cost[r][c] } else { 0.0 };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| best = best.min((0..n).map(|r| at(r, p[r])).sum()));
    best
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for _ in 0..200 {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let assignment = hungarian(&cost);
        let got: f64 = assignment.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[r][c])).sum();
        let want = brute_force_assignment(&cost);
        ensure((got - want).abs() < 1e-9, || format!("Hungarian {got} vs exhaustive {want} on {rows}x{cols}"))?;
    }

    let truth: Vec<usize> = (0..300).map(|i| i % 5).collect();
    let mut relabel: Vec<i64> = (0..5).collect();
    for _ in 0..20 {
        relabel.shuffle(&mut rng);
        let pred: Vec<i64> = truth.iter().map(|&c| relabel[c]).collect();
        let (k, n) = (kappa(&pred, &truth).map_err(err)?, nmi(&pred, &truth, NmiNorm::Geometric).map_err(err)?);
        ensure(k == 1.0 && (n - 1.0).abs() < 1e-12, || format!("perfect permuted prediction gives Kappa {k}, NMI {n}"))?;
    }

    let mut total = 0.0;
    for _ in 0..100 {
        let truth: Vec<usize> = (0..1000).map(|_| rng.random_range(0..3)).collect();
        let pred: Vec<i64> = (0..1000).map(|_| rng.random_range(0..3)).collect();
        total += kappa(&pred, &truth).map_err(err)?;
    }
    let mean = total / 100.0;
    ensure(mean.abs() < 0.05, || format!("random-label mean Kappa {mean}"))?;
    Ok(format!("Hungarian exact on 200 matrices up to 7x7; random-label mean Kappa {mean:.4}"))
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, f);
        cur.pop();
    }
}

fn nonincreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
}

fn backend_oracles() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for trial in 0..30 {
        let n = rng.random_range(4..=12);
        let k = rng.random_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let d = real_oracle(&rows);
        let got = kmedoids(&d, &BackendConfig::new(Backend::Kmed, k, trial)).map_err(err)?.objective.unwrap();
        let mut best = f64::INFINITY;
        subsets(n, k, 0, &mut Vec::new(), &mut |s| best = best.min(medoid_cost(&d, s)));
        ensure((got - best).abs() <= 1e-9 * best.max(1.0), || format!("k-medoids cost {got} vs exhaustive {best} (n={n}, k={k})"))?;
    }

    for seed in 0..5 {
        let ds = data::synth(SynthKind::Blobs, 60, 3, seed, 3.0).map_err(err)?;
        let d = real_oracle(&ds.features);
        for backend in [Backend::Km, Backend::Fcm, Backend::Nmf] {
            let mut cfg = BackendConfig::new(backend, 3, seed);
            cfg.max_iter = 300;
            let a = clustering::cluster(&d, &cfg).map_err(err)?;
            ensure(nonincreasing(&a.trace), || format!("{} objective increases (seed {seed})", backend.name()))?;
        }
    }

    let rings = data::synth(SynthKind::Rings, 400, 2, 0, 0.05).map_err(err)?;
    let truth = rings.labels.clone().unwrap();
    let d = GlobalDistanceMatrix::from_dense(rings.n(), real_oracle(&rings.features).as_slice().to_vec(), Provenance::Oracle).map_err(err)?;
    let mut sc = BackendConfig::new(Backend::Sc, 2, 0);
    sc.set("sigma", "knn:5").map_err(err)?;
    let sc_kappa = kappa(&clustering::cluster(&d, &sc).map_err(err)?.labels, &truth).map_err(err)?;
    let km_kappa = kappa(&clustering::cluster(&d, &BackendConfig::new(Backend::Km, 2, 0)).map_err(err)?.labels, &truth).map_err(err)?;
    ensure(sc_kappa >= 0.99, || format!("SC on rings Kappa {sc_kappa:.3}"))?;
    ensure(km_kappa < 0.9, || format!("KM on rings Kappa {km_kappa:.3} separates them too"))?;
    Ok(format!("k-medoids exact on 30 instances; objectives monotone; rings SC Kappa {sc_kappa:.2} vs KM {km_kappa:.2}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("exact field-level reconstruction", exact_field_reconstruction, 30),
        ("real-domain fidelity", real_fidelity, 30),
        ("distribution invariance", distribution_invariance, 60),
        ("end-to-end Iris parity", iris_parity, 60),
        ("generality backends", generality_backends, 60),
        ("feasibility gate", feasibility_gate, 120),
        ("privacy audit", privacy_audit, 30),
        ("segmentation speedup trend", segmentation_speedup, 180),
        ("metric correctness", metric_correctness, 60),
        ("clustering-backend oracles", backend_oracles, 60),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg}; took {:.1}s, limit {limit}s", elapsed.as_secs_f64())),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name} ({:.1}s): {msg}", i + 1, elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({:.1}s): {msg}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
