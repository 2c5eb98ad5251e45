//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::process::Command;
use std::time::{Duration, Instant};

use plumbing::datagen::{equiv_pair, random_graph, record_seed, scramble, GenParams, PairRecord};
use plumbing::iso::{are_isomorphic, brute_force_isomorphic};
use plumbing::moves::{apply_move, apply_r0, enumerate_moves, inverse_of, Direction, MoveKind};
use plumbing::oracle::{bounded_search, verify_certificate, SearchBudget};
use plumbing::{genus_add, PlumbingGraph, Sign, VertexId, VertexLabel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn replay(base: &PlumbingGraph, moves: &[plumbing::MoveApplication]) -> Result<PlumbingGraph, String> {
    let mut g = base.clone();
    for (i, m) in moves.iter().enumerate() {
        g = apply_move(&g, m).map_err(|e| format!("step {i}: {e}"))?;
    }
    Ok(g)
}

fn certificate_soundness() -> Outcome {
    let params = GenParams::default();
    let started = Instant::now();
    for i in 0..1000u64 {
        let record = equiv_pair(&params, record_seed(2024, i));
        // Go through the on-disk format so the ids are the ones consumers see.
        let line = serde_json::to_string(&record).map_err(|e| e.to_string())?;
        let r: PairRecord = serde_json::from_str(&line).map_err(|e| e.to_string())?;
        for (base, moves, graph) in [(&r.base1, &r.moves1, &r.graph1), (&r.base2, &r.moves2, &r.graph2)] {
            let (base, moves) = (base.as_ref().ok_or("missing base")?, moves.as_ref().ok_or("missing log")?);
            let replayed = replay(base, moves).map_err(|e| format!("record {i}: {e}"))?;
            if !are_isomorphic(&replayed, graph).map_err(|e| e.to_string())? {
                return Err(format!("record {i}: replay differs from stored graph"));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("1000/1000 records replay, {elapsed:.1?}"))
}

fn oracle_rediscovery() -> Outcome {
    let params = GenParams {
        vertex_range: (1, 6),
        kinds: MoveKind::WITH_INVERSE.to_vec(),
        inverse_kinds: MoveKind::WITH_INVERSE.to_vec(),
        ..GenParams::default()
    };
    let budget = SearchBudget { max_states: 100_000, max_depth: 6, time_limit: Duration::from_secs(60) };
    let mut times = Vec::new();
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(record_seed(99, i));
        let g = random_graph(&params, &mut rng);
        let k = rng.gen_range(1..=3);
        let mut h = g.clone();
        let log = scramble(&mut h, k, &params, &mut rng);
        if log.len() != k {
            return Err(format!("pair {i}: scramble applied {} of {k} moves", log.len()));
        }
        let started = Instant::now();
        let verdict = bounded_search(&g, &h, budget, &MoveKind::WITH_INVERSE).map_err(|e| e.to_string())?;
        times.push(started.elapsed());
        match verdict.certificate() {
            Some(cert) if verify_certificate(cert) => {}
            Some(_) => return Err(format!("pair {i}: certificate does not verify")),
            None => return Err(format!("pair {i}: {}", serde_json::to_string(&verdict).unwrap_or_default())),
        }
    }
    times.sort();
    let median = times[times.len() / 2];
    if median >= Duration::from_secs(1) {
        return Err(format!("median {median:.2?}"));
    }
    Ok(format!("200/200 found, median {median:.2?}, max {:.2?}", times[times.len() - 1]))
}

/// Same graph with vertices and edges listed in a random order and edge
/// endpoints randomly swapped.
fn relabel(g: &PlumbingGraph, rng: &mut ChaCha8Rng) -> PlumbingGraph {
    let ids: Vec<VertexId> = g.vertex_ids().collect();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(rng);
    let position = |v: VertexId| order[ids.iter().position(|&x| x == v).unwrap()];
    let mut labels = vec![VertexLabel::default(); ids.len()];
    for (i, &v) in ids.iter().enumerate() {
        labels[order[i]] = g.label(v).unwrap();
    }
    let mut edges: Vec<(usize, usize, Sign)> = g
        .edges()
        .map(|(_, e)| {
            let (u, v) = (position(e.u), position(e.v));
            if rng.gen() { (u, v, e.sign) } else { (v, u, e.sign) }
        })
        .collect();
    edges.shuffle(rng);
    PlumbingGraph::from_parts(&labels, &edges).unwrap()
}

fn mutate_label(g: &PlumbingGraph, rng: &mut ChaCha8Rng) -> PlumbingGraph {
    let ids: Vec<VertexId> = g.vertex_ids().collect();
    let v = ids[rng.gen_range(0..ids.len())];
    let l = g.label(v).unwrap();
    let mutated = if l.r == 0 { VertexLabel { e: l.e + 1, ..l } } else { VertexLabel { g: l.g + 1, ..l } };
    let mut h = g.clone();
    h.set_label(v, mutated).unwrap();
    h
}

fn isomorphism_exactness() -> Outcome {
    let params = GenParams { vertex_range: (1, 8), ..GenParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    for i in 0..10_000 {
        let g = random_graph(&params, &mut rng);
        let same = relabel(&g, &mut rng);
        let iso = are_isomorphic(&g, &same).map_err(|e| e.to_string())?;
        let brute = brute_force_isomorphic(&g, &same).map_err(|e| e.to_string())?;
        if !(iso && brute) {
            return Err(format!("graph {i}: relabelling gave iso={iso} brute={brute}"));
        }
        let other = mutate_label(&same, &mut rng);
        let iso = are_isomorphic(&g, &other).map_err(|e| e.to_string())?;
        let brute = brute_force_isomorphic(&g, &other).map_err(|e| e.to_string())?;
        if iso || brute {
            return Err(format!("graph {i}: mutation gave iso={iso} brute={brute}"));
        }
    }
    Ok("10000/10000 relabellings and mutations agree".into())
}

fn genus_semigroup() -> Outcome {
    let mut cases = [0usize; 3];
    for g1 in -10i64..=10 {
        for g2 in -10i64..=10 {
            let (expected, case) = if g1 * g2 >= 0 {
                (g1 + g2, 0)
            } else if g1 > 0 {
                (-2 * g1 + g2, 1)
            } else {
                (g1 - 2 * g2, 2)
            };
            cases[case] += 1;
            let got = genus_add(g1, g2);
            if got != expected {
                return Err(format!("{g1} # {g2} = {got}, expected {expected}"));
            }
        }
    }
    Ok(format!("441 pairs ({} same-sign, {} +/-, {} -/+)", cases[0], cases[1], cases[2]))
}

fn move_algebra() -> Outcome {
    let params = GenParams { vertex_range: (1, 10), ..GenParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for i in 0..1000 {
        let g = random_graph(&params, &mut rng);
        let ids: Vec<VertexId> = g.vertex_ids().collect();
        let v = ids[rng.gen_range(0..ids.len())];
        let back = apply_r0(&apply_r0(&g, v).map_err(|e| e.to_string())?, v).map_err(|e| e.to_string())?;
        if !are_isomorphic(&back, &g).map_err(|e| e.to_string())? {
            return Err(format!("R0 twice at {v} on graph {i} is not the identity"));
        }
    }

    let mut per_kind = std::collections::BTreeMap::new();
    let seeding = GenParams { kinds: vec![], ..params.clone() };
    for i in 0..1000 {
        // A few blow-ups and splits first so forward sites exist.
        let mut g = random_graph(&params, &mut rng);
        let seeds = rng.gen_range(0..=3);
        scramble(&mut g, seeds, &seeding, &mut rng);
        let direction = if rng.gen() { Direction::Forward } else { Direction::Inverse };
        let mut apps = enumerate_moves(&g, &MoveKind::WITH_INVERSE, &[direction]);
        if apps.is_empty() {
            apps = enumerate_moves(&g, &MoveKind::WITH_INVERSE, &Direction::BOTH);
        }
        let app = apps[rng.gen_range(0..apps.len())].clone();
        let h = apply_move(&g, &app).map_err(|e| format!("site {i}: {e}"))?;
        let undo = inverse_of(&g, &app).map_err(|e| format!("site {i}: {e}"))?;
        let back = apply_move(&h, &undo).map_err(|e| format!("site {i}: undo failed: {e}"))?;
        if !are_isomorphic(&back, &g).map_err(|e| e.to_string())? {
            return Err(format!("site {i}: {app} then its inverse is not the identity"));
        }
        *per_kind.entry(format!("{}/{:?}", app.kind, app.direction)).or_insert(0) += 1;
    }
    Ok(format!("1000 R0 involutions, 1000 round trips {per_kind:?}"))
}

fn file_digest_equal(a: &std::path::Path, b: &std::path::Path) -> std::io::Result<bool> {
    if std::fs::metadata(a)?.len() != std::fs::metadata(b)?.len() {
        return Ok(false);
    }
    let (mut fa, mut fb) = (BufReader::new(File::open(a)?), BufReader::new(File::open(b)?));
    let (mut ba, mut bb) = (vec![0u8; 1 << 20], vec![0u8; 1 << 20]);
    loop {
        let n = fa.read(&mut ba)?;
        if n == 0 {
            return Ok(true);
        }
        fb.read_exact(&mut bb[..n])?;
        if ba[..n] != bb[..n] {
            return Ok(false);
        }
    }
}

fn dataset_scale() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["first.jsonl", "second.jsonl"] {
        let path = dir.path().join(name);
        let started = Instant::now();
        let output = Command::new(env!("CARGO_BIN_EXE_plumb"))
            .args(["gen", "--count", "80000", "--equiv-frac", "0.5", "--tweak-frac", "0.25", "--seed", "7", "--out"])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        if !output.status.success() {
            return Err(format!("plumb gen failed: {}", String::from_utf8_lossy(&output.stderr)));
        }
        if elapsed > Duration::from_secs(600) {
            return Err(format!("generation took {elapsed:.1?}"));
        }
        let summary: serde_json::Value = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;
        let sources = &summary["sources"];
        if (sources["equiv"].as_u64(), sources["inequiv"].as_u64(), sources["tweak"].as_u64())
            != (Some(40_000), Some(20_000), Some(20_000))
        {
            return Err(format!("summary composition {sources}"));
        }
        runs.push((path, elapsed));
    }
    // The file itself, not just the summary, must have the composition.
    let mut counts = [0usize; 3];
    for line in BufReader::new(File::open(&runs[0].0).map_err(|e| e.to_string())?).lines() {
        let line = line.map_err(|e| e.to_string())?;
        for (i, tag) in ["\"source\":\"equiv\"", "\"source\":\"inequiv\"", "\"source\":\"tweak\""].iter().enumerate() {
            if line.contains(tag) {
                counts[i] += 1;
            }
        }
    }
    if counts != [40_000, 20_000, 20_000] {
        return Err(format!("file composition {counts:?}"));
    }
    if !file_digest_equal(&runs[0].0, &runs[1].0).map_err(|e| e.to_string())? {
        return Err("rerun with the same seed differs".into());
    }
    let size = std::fs::metadata(&runs[0].0).map_err(|e| e.to_string())?.len();
    Ok(format!(
        "40000/20000/20000, {:.1?} and {:.1?}, byte-identical ({} MB)",
        runs[0].1,
        runs[1].1,
        size / 1_000_000
    ))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("certificate soundness", certificate_soundness),
        ("oracle rediscovery", oracle_rediscovery),
        ("isomorphism exactness", isomorphism_exactness),
        ("genus semigroup", genus_semigroup),
        ("move algebra", move_algebra),
        ("dataset scale and determinism", dataset_scale),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
