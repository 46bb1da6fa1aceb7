//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the test harness capture) and then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use provcat::bag::validate_bag;
use provcat::catalog::{CatalogOptions, ColumnDef, ColumnKind, TableDef};
use provcat::dataset::{BumpLevel, SemVer};
use provcat::error::Error;
use provcat::execution::{ExecutionConfig, ExecutionStatus, WorkflowRef};
use provcat::provenance::Direction;
use provcat::service::ServerHandle;
use provcat::store::sha256_hex;
use provcat::vocab::NewTerm;
use provcat::workflow::WorkflowSpec;
use provcat::{values, Catalog, Filter, Rid, Workspace};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

const C1_LIMIT: Duration = Duration::from_secs(10);
const C2_LIMIT: Duration = Duration::from_secs(30);
const C5_LIMIT: Duration = Duration::from_secs(60);
const C6_LIMIT: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

fn report(n: u32, name: &str, started: Instant, limit: Option<Duration>, outcome: Outcome) {
    let elapsed = started.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(l)) if elapsed >= l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
        (o, _) => o,
    };
    let limit = limit.map(|l| format!(" < {l:?}")).unwrap_or_default();
    let line = match &outcome {
        Ok(detail) => format!("acceptance {n} {name}: PASS ({detail}; {elapsed:.2?}{limit})"),
        Err(why) => format!("acceptance {n} {name}: FAIL ({why}; {elapsed:.2?}{limit})"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(outcome.is_ok(), "{line}");
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---- 1: semver propagation ----

fn parse_triple(s: &str) -> (u64, u64, u64) {
    let p: Vec<u64> = s.split('.').map(|x| x.parse().unwrap()).collect();
    (p[0], p[1], p[2])
}

fn bump_triple((ma, mi, pa): (u64, u64, u64), level: BumpLevel) -> (u64, u64, u64) {
    match level {
        BumpLevel::Major => (ma + 1, 0, 0),
        BumpLevel::Minor => (ma, mi + 1, 0),
        BumpLevel::Patch => (ma, mi, pa + 1),
    }
}

fn ancestors_dfs(parents: &HashMap<usize, Vec<usize>>, node: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        for &p in parents.get(&n).into_iter().flatten() {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    seen
}

fn semver_propagation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5e_0001);
    let mut bumps = 0;
    let levels = [BumpLevel::Major, BumpLevel::Minor, BumpLevel::Patch];
    for case in 0..100 {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let n = rng.gen_range(1..=20);
        let ds: Vec<Rid> = (0..n)
            .map(|i| cat.create_dataset(&format!("node {i}"), &[], None).map(|x| x.0))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let mut parents: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 1..n {
            let children: Vec<usize> = (0..i).filter(|_| rng.gen_bool(0.3)).collect();
            if children.is_empty() {
                continue;
            }
            let rids: Vec<Rid> = children.iter().map(|&c| ds[c].clone()).collect();
            cat.add_members(&ds[i], &rids, None).map_err(e)?;
            for c in children {
                parents.entry(c).or_default().push(i);
            }
        }
        for _ in 0..3 {
            let k = rng.gen_range(0..n);
            let level = *levels.choose(&mut rng).unwrap();
            let before: Vec<Vec<(u64, u64, u64)>> = ds
                .iter()
                .map(|d| cat.list_versions(d).map(|vs| vs.iter().map(|v| parse_triple(&v.version.to_string())).collect()))
                .collect::<Result<_, _>>()
                .map_err(e)?;
            let s0 = cat.current_snapshot().0;
            let returned = cat.increment_version(&ds[k], level, "bump", None).map_err(e)?;
            let s1 = cat.current_snapshot().0;
            ensure!(s1 == s0 + 1, "case {case}: bump took {} snapshots", s1 - s0);

            let mut expected = ancestors_dfs(&parents, k);
            expected.insert(k);
            for (i, d) in ds.iter().enumerate() {
                let after = cat.list_versions(d).map_err(e)?;
                let fresh: Vec<_> = after
                    .iter()
                    .filter(|v| !before[i].contains(&parse_triple(&v.version.to_string())))
                    .collect();
                if !expected.contains(&i) {
                    ensure!(fresh.is_empty(), "case {case}: {d} is not an ancestor of {} but was bumped", ds[k]);
                    continue;
                }
                ensure!(fresh.len() == 1, "case {case}: {d} got {} new versions", fresh.len());
                ensure!(after.len() == before[i].len() + 1, "case {case}: {d} history changed size");
                let prev = *before[i].iter().max().unwrap();
                let want = bump_triple(prev, level);
                let got = parse_triple(&fresh[0].version.to_string());
                ensure!(got == want, "case {case}: {d} {level} bump gave {got:?}, expected {want:?}");
                ensure!(fresh[0].snapshot.0 == s1, "case {case}: {d} version in snapshot {}", fresh[0].snapshot.0);
                if i == k {
                    ensure!(
                        parse_triple(&returned.to_string()) == want,
                        "case {case}: returned {returned}"
                    );
                }
            }
            bumps += 1;
        }
    }
    Ok(format!("100 DAGs, {bumps} bumps match graph-search oracle"))
}

#[test]
fn c1_semver_propagation() {
    let t = Instant::now();
    report(1, "semver propagation", t, Some(C1_LIMIT), semver_propagation());
}

// ---- 2: snapshot fidelity ----

type Members = BTreeMap<Rid, BTreeSet<Rid>>;

fn oracle_flatten(m: &Members, d: &Rid) -> BTreeSet<Rid> {
    let mut out = BTreeSet::new();
    let mut queue = VecDeque::from([d.clone()]);
    let mut seen = BTreeSet::from([d.clone()]);
    while let Some(x) = queue.pop_front() {
        for c in m.get(&x).into_iter().flatten() {
            out.insert(c.clone());
            if m.contains_key(c) && seen.insert(c.clone()) {
                queue.push_back(c.clone());
            }
        }
    }
    out
}

fn reachable(m: &Members, from: &Rid, to: &Rid) -> bool {
    from == to || oracle_flatten(m, from).contains(to)
}

fn snapshot_fidelity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5e_0002);
    let mut checked = 0usize;
    let workloads = 60;
    for w in 0..workloads {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        cat.define_table(TableDef::domain("Item").column("Name", ColumnKind::Text))
            .map_err(e)?;
        let items = cat
            .insert_entities("Item", (0..24).map(|i| values! { "Name" => format!("item {i}") }).collect())
            .map_err(e)?;
        let mut live: Members = BTreeMap::new();
        let mut history: BTreeMap<u64, Members> = BTreeMap::new();
        let budget = rng.gen_range(5..=20);
        let start = cat.current_snapshot().0;
        while cat.current_snapshot().0 - start < budget {
            let datasets: Vec<Rid> = live.keys().cloned().collect();
            let op = if datasets.is_empty() { 0 } else { rng.gen_range(0..5) };
            let before = cat.current_snapshot().0;
            match op {
                0 => {
                    let (d, _) = cat.create_dataset("workload set", &[], None).map_err(e)?;
                    live.insert(d, BTreeSet::new());
                }
                1 => {
                    let d = datasets.choose(&mut rng).unwrap().clone();
                    let pick: Vec<Rid> = items
                        .choose_multiple(&mut rng, 3)
                        .filter(|i| !live[&d].contains(*i))
                        .cloned()
                        .collect();
                    if pick.is_empty() {
                        continue;
                    }
                    cat.add_members(&d, &pick, None).map_err(e)?;
                    live.get_mut(&d).unwrap().extend(pick);
                }
                2 => {
                    let d = datasets.choose(&mut rng).unwrap().clone();
                    let c = datasets.choose(&mut rng).unwrap().clone();
                    if live[&d].contains(&c) {
                        continue;
                    }
                    let cyclic = reachable(&live, &c, &d);
                    match cat.add_members(&d, std::slice::from_ref(&c), None) {
                        Ok(_) => {
                            ensure!(!cyclic, "workload {w}: cycle {d} <- {c} accepted");
                            live.get_mut(&d).unwrap().insert(c);
                        }
                        Err(Error::Cycle { .. }) => {
                            ensure!(cyclic, "workload {w}: {d} <- {c} rejected as a cycle");
                            ensure!(cat.current_snapshot().0 == before, "rejected write committed");
                            continue;
                        }
                        Err(other) => return Err(e(other)),
                    }
                }
                3 => {
                    let d = datasets.choose(&mut rng).unwrap().clone();
                    let current: Vec<Rid> = live[&d].iter().cloned().collect();
                    if current.is_empty() {
                        continue;
                    }
                    let k = rng.gen_range(1..=current.len().min(2));
                    let gone: Vec<Rid> = current.choose_multiple(&mut rng, k).cloned().collect();
                    cat.remove_members(&d, &gone, None).map_err(e)?;
                    for g in &gone {
                        live.get_mut(&d).unwrap().remove(g);
                    }
                }
                _ => {
                    let d = datasets.choose(&mut rng).unwrap().clone();
                    cat.increment_version(&d, BumpLevel::Patch, "touch", None).map_err(e)?;
                }
            }
            let now = cat.current_snapshot().0;
            ensure!(now == before + 1, "workload {w}: operation used {} snapshots", now - before);
            history.insert(now, live.clone());
        }
        for d in live.keys() {
            for v in cat.list_versions(d).map_err(e)? {
                let copy = history
                    .get(&v.snapshot.0)
                    .ok_or_else(|| format!("workload {w}: {d}@{} at unknown snapshot", v.version))?;
                let direct: BTreeSet<Rid> = cat
                    .dataset_members(d, Some(v.version), false)
                    .map_err(e)?
                    .into_iter()
                    .map(|m| m.rid)
                    .collect();
                ensure!(
                    &direct == copy.get(d).unwrap_or(&BTreeSet::new()),
                    "workload {w}: {d}@{} direct members differ from the full copy",
                    v.version
                );
                let flat: BTreeSet<Rid> = cat
                    .dataset_members(d, Some(v.version), true)
                    .map_err(e)?
                    .into_iter()
                    .map(|m| m.rid)
                    .collect();
                ensure!(
                    flat == oracle_flatten(copy, d),
                    "workload {w}: {d}@{} flattened members differ from the full copy",
                    v.version
                );
                checked += 1;
            }
        }
    }
    Ok(format!("{workloads} workloads, {checked} versions equal the full-copy oracle"))
}

#[test]
fn c2_snapshot_fidelity() {
    let t = Instant::now();
    report(2, "snapshot fidelity", t, Some(C2_LIMIT), snapshot_fidelity());
}

// ---- 3: bag determinism ----

/// Builds the same catalog from scratch: returns the dataset and the
/// version to export.
fn replay(root: &Path) -> Result<(Workspace, Rid, SemVer), String> {
    let (ws, images) = common::image_workspace(root, 6);
    let cat = ws.catalog();
    let (parent, _) = cat.create_dataset("all images", &["training"], None).map_err(e)?;
    let (child, _) = cat.create_dataset("left eyes", &[], None).map_err(e)?;
    cat.add_members(&child, &images[..3], None).map_err(e)?;
    cat.add_members(&parent, std::slice::from_ref(&child), None).map_err(e)?;
    let v = cat.add_members(&parent, &images[3..], None).map_err(e)?;
    cat.remove_members(&child, &images[..1], None).map_err(e)?;
    Ok((ws, parent, v))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|x| x.ok())
        .filter(|x| x.file_type().is_file())
        .map(|x| {
            let rel = x.path().strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            (rel, fs::read(x.path()).unwrap())
        })
        .collect()
}

fn copy_tree(from: &Path, to: &Path) {
    for (rel, bytes) in tree(from) {
        let dest = to.join(rel);
        fs::create_dir_all(dest.parent().unwrap()).unwrap();
        fs::write(dest, bytes).unwrap();
    }
}

fn bag_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (ws_a, d_a, v_a) = replay(&dir.path().join("a"))?;
    let (ws_b, d_b, v_b) = replay(&dir.path().join("b"))?;
    ensure!(d_a == d_b && v_a == v_b, "replays diverged: {d_a}@{v_a} vs {d_b}@{v_b}");
    let (bag_a, bag_b) = (dir.path().join("bag-a"), dir.path().join("bag-b"));
    let desc_a = ws_a.export_bag(&d_a, Some(v_a), &bag_a).map_err(e)?;
    let desc_b = ws_b.export_bag(&d_b, Some(v_b), &bag_b).map_err(e)?;
    ensure!(desc_a.bag_checksum == desc_b.bag_checksum, "bag checksums differ");
    for m in ["manifest-sha256.txt", "tagmanifest-sha256.txt", "fetch.txt", "bag-info.txt"] {
        let (x, y) = (fs::read(bag_a.join(m)).map_err(e)?, fs::read(bag_b.join(m)).map_err(e)?);
        ensure!(x == y, "{m} differs between replays");
    }
    let (ta, tb) = (tree(&bag_a), tree(&bag_b));
    ensure!(ta == tb, "bag trees differ between replays");
    let again = ws_a.export_bag(&d_a, Some(v_a), &dir.path().join("bag-a2")).map_err(e)?;
    ensure!(again.bag_checksum == desc_a.bag_checksum, "re-export changed the checksum");

    let mat = dir.path().join("mat");
    ws_a.materialize_bag(bag_a.to_str().unwrap(), &mat).map_err(e)?;
    ensure!(validate_bag(&mat, true).map_err(e)?.is_valid(), "materialized bag invalid");
    let manifest = fs::read_to_string(mat.join("manifest-sha256.txt")).map_err(e)?;
    let payload: Vec<String> = manifest
        .lines()
        .filter_map(|l| l.split_once(' ').map(|(_, p)| p.trim().to_string()))
        .collect();
    let mut rng = StdRng::seed_from_u64(0x5e_0003);
    let mut trials = 0;
    for path in &payload {
        let len = fs::metadata(mat.join(path)).map_err(e)?.len();
        if len == 0 {
            continue;
        }
        let trial = dir.path().join(format!("trial-{trials}"));
        copy_tree(&mat, &trial);
        let target = trial.join(path);
        let mut bytes = fs::read(&target).map_err(e)?;
        let at = rng.gen_range(0..bytes.len());
        bytes[at] ^= 1 << rng.gen_range(0..8);
        fs::write(&target, bytes).map_err(e)?;
        let report = validate_bag(&trial, true).map_err(e)?;
        ensure!(
            report.failing_paths() == vec![path.clone()],
            "flipping a byte of {path} reported {:?}",
            report.failing_paths()
        );
        trials += 1;
    }
    ensure!(trials >= 10, "only {trials} payload files to corrupt");
    Ok(format!(
        "checksum {} identical across replays; {trials}/{trials} single-byte corruptions named exactly",
        &desc_a.bag_checksum[..12]
    ))
}

#[test]
fn c3_bag_determinism() {
    let t = Instant::now();
    report(3, "bag determinism", t, None, bag_determinism());
}

// ---- 4: two-stage resolution ----

fn two_stage_resolution() -> Outcome {
    const N: u64 = 10;
    let dir = tempfile::tempdir().map_err(e)?;
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), N as usize);
    let cat = ws.catalog();
    let (d, _) = cat.create_dataset("resolution pool", &[], None).map_err(e)?;
    let v = cat.add_members(&d, &images, None).map_err(e)?;
    ensure!(cat.dataset_version(&d, Some(v)).map_err(e)?.minid.is_none(), "minid before first resolve");

    let cache = dir.path().join("cache");
    ws.stats().reset();
    let first = ws.resolve_dataset(&d, Some(v), &cache).map_err(e)?;
    let c = ws.stats().counts();
    ensure!(c.asset_fetches == N && c.exports == 1, "first resolve: {c:?}");
    let record = cat.dataset_version(&d, Some(v)).map_err(e)?;
    ensure!(record.minid.as_deref() == Some(first.minid.as_str()), "minid not registered on the version");

    ws.stats().reset();
    let second = ws.resolve_dataset(&d, Some(v), &cache).map_err(e)?;
    let c = ws.stats().counts();
    ensure!(second == first, "second resolve returned a different bag");
    ensure!(c.asset_fetches == 0 && c.bag_file_fetches == 0 && c.exports == 0, "second resolve: {c:?}");

    ws.stats().reset();
    let third = ws.resolve_dataset(&d, Some(v), &dir.path().join("fresh")).map_err(e)?;
    let c = ws.stats().counts();
    ensure!(c.asset_fetches == N && c.exports == 0, "fresh-cache resolve: {c:?}");
    ensure!(third.checksum == first.checksum, "fresh cache resolved another bag");
    ensure!(validate_bag(&third.path, true).map_err(e)?.is_valid(), "fresh-cache bag invalid");
    Ok(format!("fetches {N}/0/{N}, exports 1/0/0"))
}

#[test]
fn c4_two_stage_resolution() {
    let t = Instant::now();
    report(4, "two-stage resolution", t, None, two_stage_resolution());
}

// ---- 5: execution provenance chain ----

fn inline(name: &str, kind: &str) -> WorkflowRef {
    WorkflowRef::Spec(
        WorkflowSpec::new(name, format!("https://example.org/{name}.py"), kind).checksum(sha256_hex(name.as_bytes())),
    )
}

fn provenance_chain() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 30);
    let ws = ws.with_cache_dir(dir.path().join("cache"));
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Crop_Image")).map_err(e)?;
    cat.define_asset_table(TableDef::domain("Model")).map_err(e)?;
    cat.create_vocabulary("Annotation_Function", "AF").map_err(e)?;
    cat.add_term("Annotation_Function", NewTerm::new("template_crop")).map_err(e)?;
    cat.add_term("Annotation_Type", NewTerm::new("optic_nerve").exist_ok()).map_err(e)?;
    for t in ["detection", "training"] {
        cat.add_term("Workflow_Type", NewTerm::new(t).exist_ok()).map_err(e)?;
    }
    cat.create_feature(
        "Image",
        "Annotation",
        vec![
            ColumnDef::new("Annotation_Function", ColumnKind::TermRef("Annotation_Function".into())),
            ColumnDef::new("Annotation_Type", ColumnKind::TermRef("Annotation_Type".into())),
            ColumnDef::new("Crop", ColumnKind::AssetRef("Crop_Image".into())),
        ],
    )
    .map_err(e)?;
    let (source, _) = cat.create_dataset("fundus images", &[], None).map_err(e)?;
    cat.add_members(&source, &images, None).map_err(e)?;

    let cfg1 = ExecutionConfig::new(inline("optic_nerve_detection", "detection"))
        .dataset(source.clone(), None)
        .parameter("window", 64);
    let e1 = ws.execution_begin(&cfg1, &dir.path().join("e1")).map_err(e)?;
    ensure!(e1.dataset_path(&source).is_some_and(Path::is_dir), "source dataset not staged");
    let crops = e1.output_dir("Crop_Image").map_err(e)?;
    let mut csv = String::from("Image,Annotation_Function,Annotation_Type,Crop\n");
    for (i, img) in images.iter().enumerate() {
        let name = format!("crop_{img}.svg");
        let svg = format!("<svg><rect x=\"{i}\" y=\"{}\" width=\"64\" height=\"64\"/></svg>", 2 * i);
        fs::write(crops.join(&name), svg).map_err(e)?;
        csv.push_str(&format!("{img},template_crop,optic_nerve,outputs/Crop_Image/{name}\n"));
    }
    fs::write(e1.feature_dir("Image", "Annotation").map_err(e)?.join("values.csv"), csv).map_err(e)?;
    let e1_rid = e1.rid().clone();
    let out1 = e1.finish(ExecutionStatus::Completed, None).map_err(e)?;
    ensure!(out1.failures.is_empty(), "E1 failures: {:?}", out1.failures);
    ensure!(out1.features.values().sum::<usize>() == 30, "E1 wrote {:?}", out1.features);
    let crop_assets: Vec<Rid> = out1.outputs.iter().filter(|a| a.table == "Crop_Image").map(|a| a.rid.clone()).collect();
    ensure!(crop_assets.len() == 30, "E1 uploaded {} crops", crop_assets.len());

    let (split, _) = cat.create_dataset("optic nerve crops", &[], Some(&e1_rid)).map_err(e)?;
    let mut parts = Vec::new();
    for (name, range) in [("training", 0..18), ("validation", 18..24), ("testing", 24..30)] {
        let (d, _) = cat.create_dataset(&format!("{name} crops"), &[name], Some(&e1_rid)).map_err(e)?;
        cat.add_members(&d, &crop_assets[range], Some(&e1_rid)).map_err(e)?;
        parts.push(d);
    }
    cat.add_members(&split, &parts, Some(&e1_rid)).map_err(e)?;

    let cfg2 = ExecutionConfig::new(inline("glaucoma_classifier", "training"))
        .dataset(parts[0].clone(), None)
        .dataset(parts[1].clone(), None)
        .parameter("epochs", 3);
    let e2 = ws.execution_begin(&cfg2, &dir.path().join("e2")).map_err(e)?;
    fs::write(e2.output_dir("Model").map_err(e)?.join("classifier.bin"), b"weights").map_err(e)?;
    let e2_rid = e2.rid().clone();
    let out2 = e2.finish(ExecutionStatus::Completed, None).map_err(e)?;
    let model = out2.outputs.iter().find(|a| a.table == "Model").ok_or("no model uploaded")?.rid.clone();

    let g = cat.lineage(&model, Direction::Upstream, None).map_err(e)?;
    let inputs = cat.execution_datasets(&e2_rid).map_err(e)?;
    ensure!(inputs.len() == 2, "E2 has {} dataset inputs", inputs.len());
    let mut required = vec![("E2", e2_rid.clone()), ("E1", e1_rid.clone())];
    for v in &inputs {
        required.push(("E2 input dataset version", v.rid.clone()));
    }
    for (label, x) in [("E1", &e1_rid), ("E2", &e2_rid)] {
        let wf = cat.execution(x).map_err(e)?.workflow.ok_or(format!("{label} has no workflow"))?;
        required.push(("workflow", wf));
    }
    for (label, rid) in &required {
        ensure!(g.contains(rid), "lineage(model) lacks {label} {rid}");
    }
    let report = cat.check_disjoint(&parts, true).map_err(e)?;
    ensure!(report.is_disjoint(), "splits overlap: {:?}", report.overlaps);
    Ok(format!("{} upstream nodes include E2, its inputs, E1 and both workflows; splits disjoint", g.nodes.len()))
}

#[test]
fn c5_execution_provenance_chain() {
    let t = Instant::now();
    report(5, "execution provenance chain", t, Some(C5_LIMIT), provenance_chain());
}

// ---- 6: scale smoke ----

fn scale_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 72);
    let ws = ws.with_cache_dir(dir.path().join("cache"));
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Model")).map_err(e)?;
    cat.add_term("Workflow_Type", NewTerm::new("training")).map_err(e)?;
    let wf = cat
        .register_workflow(
            &WorkflowSpec::new("label_efficiency", "https://example.org/train.py", "training")
                .checksum(sha256_hex(b"train.py")),
            None,
        )
        .map_err(e)?;
    let mut rng = StdRng::seed_from_u64(0x5e_0006);
    let mut subsets = Vec::new();
    for k in 0..36 {
        let size = 4 + k % 9;
        let pick: Vec<Rid> = images.choose_multiple(&mut rng, size).cloned().collect();
        let (d, _) = cat.create_dataset(&format!("subset {k}"), &["training"], None).map_err(e)?;
        cat.add_members(&d, &pick, None).map_err(e)?;
        subsets.push(d);
    }
    let mut expected: BTreeMap<Rid, (usize, Rid)> = BTreeMap::new();
    for i in 0..142usize {
        let subset = subsets[i % 36].clone();
        let arch = if i < 71 { "vgg19" } else { "retfound" };
        let cfg = ExecutionConfig::new(WorkflowRef::Rid(wf.rid.clone()))
            .dataset(subset.clone(), None)
            .parameter("model", arch)
            .parameter("seed", i as i64);
        let h = ws.execution_begin(&cfg, &dir.path().join(format!("runs/{i:03}"))).map_err(e)?;
        fs::write(h.output_dir("Model").map_err(e)?.join("model.bin"), format!("{arch} weights {i}")).map_err(e)?;
        let rid = h.rid().clone();
        let out = h.finish(ExecutionStatus::Completed, None).map_err(e)?;
        ensure!(out.failures.is_empty(), "run {i}: {:?}", out.failures);
        expected.insert(rid, (i, subset));
    }

    let all = cat.list_executions(None).map_err(e)?;
    ensure!(all.len() == 142, "{} executions recorded", all.len());
    let mut outputs = BTreeSet::new();
    let mut checksums = BTreeSet::new();
    for x in &all {
        let (i, subset) = expected.get(&x.rid).ok_or(format!("unexpected execution {}", x.rid))?;
        ensure!(x.status == ExecutionStatus::Completed, "{} is {}", x.rid, x.status);
        ensure!(x.workflow.as_ref() == Some(&wf.rid), "{} has workflow {:?}", x.rid, x.workflow);
        let ds = cat.execution_datasets(&x.rid).map_err(e)?;
        ensure!(ds.len() == 1 && &ds[0].dataset == subset, "{} inputs {:?}", x.rid, ds);
        let inputs = cat.execution_assets(&x.rid, Some("input")).map_err(e)?;
        ensure!(
            inputs.iter().any(|a| a.table == "Execution_Config"),
            "{} lacks its configuration input",
            x.rid
        );
        let cfg = ws.execution_config(&x.rid).map_err(e)?;
        ensure!(cfg.parameters.get("seed") == Some(&json!(*i as i64)), "{} config {:?}", x.rid, cfg.parameters);
        ensure!(cfg.datasets[0].version.is_some(), "{} config does not pin a version", x.rid);
        for out in cat.execution_assets(&x.rid, Some("output")).map_err(e)? {
            if out.table == "Model" {
                ensure!(outputs.insert(out.asset.clone()), "output {} shared", out.asset);
                checksums.insert(cat.asset(&out.asset).map_err(e)?.checksum);
            }
        }
    }
    ensure!(outputs.len() == 142 && checksums.len() == 142, "{} distinct model outputs", outputs.len());
    Ok("36 subsets, 142 executions with pinned inputs and 142 distinct models".into())
}

#[test]
fn c6_scale_smoke() {
    let t = Instant::now();
    report(6, "scale smoke", t, Some(C6_LIMIT), scale_smoke());
}

// ---- 7: multi-rater features ----

fn multi_rater() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 10);
    let cat = ws.catalog();
    cat.create_vocabulary("Diagnosis_Label", "DX").map_err(e)?;
    let labels = ["referable", "non_referable", "ungradable"];
    for l in labels {
        cat.add_term("Diagnosis_Label", NewTerm::new(l)).map_err(e)?;
    }
    cat.add_term("Workflow_Type", NewTerm::new("grading")).map_err(e)?;
    let def = cat
        .create_feature(
            "Image",
            "Diagnosis",
            vec![ColumnDef::new("Diagnosis_Label", ColumnKind::TermRef("Diagnosis_Label".into()))],
        )
        .map_err(e)?;
    let grade = |rater: usize, image: usize| labels[(rater * 7 + image * 3) % 3];

    let mut raters: BTreeMap<Rid, usize> = BTreeMap::new();
    for r in 0..13 {
        let cfg = ExecutionConfig::new(inline("clinician_review", "grading")).parameter("clinician", r as i64);
        let h = ws.execution_begin(&cfg, &dir.path().join(format!("rater{r}"))).map_err(e)?;
        let mut csv = String::from("Image,Diagnosis_Label\n");
        for (i, img) in images.iter().enumerate() {
            csv.push_str(&format!("{img},{}\n", grade(r, i)));
        }
        fs::write(h.feature_dir("Image", "Diagnosis").map_err(e)?.join("values.csv"), csv).map_err(e)?;
        let rid = h.rid().clone();
        let out = h.finish(ExecutionStatus::Completed, None).map_err(e)?;
        ensure!(out.failures.is_empty(), "rater {r}: {:?}", out.failures);
        raters.insert(rid, r);
    }

    let rows = cat.feature_values("Image", "Diagnosis", &Filter::all(), None).map_err(e)?;
    ensure!(rows.len() == 130, "{} feature rows", rows.len());
    let image_index: HashMap<&Rid, usize> = images.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let mut pairs = BTreeSet::new();
    for row in &rows {
        let exec = row.rid_at("Execution").ok_or("row without execution")?;
        let rater = *raters.get(&exec).ok_or(format!("row {} from unknown execution", row.rid))?;
        ensure!(
            cat.execution(&exec).map_err(e)?.status == ExecutionStatus::Completed,
            "generating execution {exec} not completed"
        );
        let image = row.rid_at("Image").ok_or("row without source record")?;
        ensure!(cat.get("Image", &image, None).map_err(e)?.is_some(), "source {image} does not resolve");
        let name = row.text("Feature_Name").ok_or("row without feature name")?;
        ensure!(name == def.feature_name, "feature name {name}");
        cat.lookup_term("Feature_Name", name).map_err(e)?;
        let value = row.text("Diagnosis_Label").ok_or("row without value")?;
        let term = cat.lookup_term("Diagnosis_Label", value).map_err(e)?;
        let i = *image_index.get(&image).ok_or("unknown image")?;
        ensure!(term.name == grade(rater, i), "rater {rater} image {i}: {value}");
        pairs.insert((exec, image));
    }
    ensure!(pairs.len() == 130, "{} distinct (execution, image) pairs", pairs.len());
    Ok("130 rows; execution, source image, feature name and value all resolve".into())
}

#[test]
fn c7_multi_rater_features() {
    let t = Instant::now();
    report(7, "multi-rater features", t, None, multi_rater());
}

// ---- 8: interface equivalence ----

/// One step of the scripted session. `$name` arguments refer to RIDs
/// produced by earlier steps.
#[derive(Clone, Copy)]
enum Step {
    DefineTable(&'static str, &'static str, &'static [&'static str]),
    CreateVocab(&'static str, &'static str),
    AddTerm(&'static str, &'static str, &'static [&'static str]),
    FindTerm(&'static str, &'static str),
    RegisterWorkflow(&'static str, &'static str),
    DefineFeature(&'static str, &'static str, &'static [&'static str]),
    CreateDataset(&'static str, &'static str, &'static [&'static str]),
    AddMembers(&'static str, &'static [&'static str]),
    RemoveMembers(&'static str, &'static [&'static str]),
    Bump(&'static str, &'static str),
    Versions(&'static str),
    Members(&'static str, &'static str),
    Disjoint(&'static [&'static str]),
    Publish(&'static str),
}

const SESSION: &[Step] = &[
    Step::DefineTable("Specimen", "plain", &["Label:text", "Weight:float?"]),
    Step::DefineTable("Scan", "asset", &["Eye:text?"]),
    Step::CreateVocab("Grade", "GR"),
    Step::AddTerm("Grade", "normal", &[]),
    Step::AddTerm("Grade", "referable", &["ref", "glaucoma suspect"]),
    Step::AddTerm("Grade", "ungradable", &[]),
    Step::AddTerm("Workflow_Type", "training", &["fit"]),
    Step::FindTerm("Grade", "ref"),
    Step::RegisterWorkflow("trainer", "training"),
    Step::RegisterWorkflow("trainer", "fit"),
    Step::DefineFeature("Image", "Quality", &["Grade:term_ref(Grade)", "Score:float?"]),
    Step::CreateDataset("all", "everything", &["training"]),
    Step::CreateDataset("train", "training split", &["training"]),
    Step::CreateDataset("val", "validation split", &["validation"]),
    Step::CreateDataset("test", "test split", &["testing"]),
    Step::AddMembers("train", &["img0", "img1", "img2", "img3"]),
    Step::AddMembers("val", &["img4", "img5"]),
    Step::AddMembers("test", &["img6"]),
    Step::AddMembers("all", &["train", "val", "test"]),
    Step::Bump("train", "patch"),
    Step::Bump("all", "minor"),
    Step::RemoveMembers("val", &["img5"]),
    Step::AddMembers("test", &["img7"]),
    Step::Disjoint(&["train", "val", "test"]),
    Step::Versions("all"),
    Step::Members("all", "0.2.0"),
    Step::Publish("train"),
    Step::Bump("test", "major"),
    Step::Members("test", ""),
];

trait Interface {
    fn step(&mut self, step: Step, names: &mut BTreeMap<String, String>) -> Result<(), String>;
}

fn resolve(names: &BTreeMap<String, String>, n: &str) -> String {
    names.get(n).cloned().unwrap_or_else(|| n.to_string())
}

fn resolve_all(names: &BTreeMap<String, String>, ns: &[&str]) -> Vec<String> {
    ns.iter().map(|n| resolve(names, n)).collect()
}

struct Library(Workspace);

impl Interface for Library {
    fn step(&mut self, step: Step, names: &mut BTreeMap<String, String>) -> Result<(), String> {
        let cat = self.0.catalog();
        let rid = |n: &str| resolve(names, n).parse::<Rid>().map_err(e);
        let rids = |ns: &[&str]| ns.iter().map(|n| rid(n)).collect::<Result<Vec<_>, _>>();
        match step {
            Step::DefineTable(name, kind, cols) => {
                let mut def = TableDef::domain(name);
                for c in cols {
                    def.columns.push(ColumnDef::parse(c).map_err(e)?);
                }
                if kind == "asset" {
                    cat.define_asset_table(def).map_err(e)?;
                } else {
                    cat.define_table(def).map_err(e)?;
                }
            }
            Step::CreateVocab(n, p) => {
                cat.create_vocabulary(n, p).map_err(e)?;
            }
            Step::AddTerm(v, n, syn) => {
                cat.add_term(v, NewTerm::new(n).synonyms(syn.iter().copied())).map_err(e)?;
            }
            Step::FindTerm(v, t) => {
                cat.lookup_term(v, t).map_err(e)?;
            }
            Step::RegisterWorkflow(n, t) => {
                let spec = WorkflowSpec::new(n, format!("https://example.org/{n}"), t).checksum(sha256_hex(n.as_bytes()));
                cat.register_workflow(&spec, None).map_err(e)?;
            }
            Step::DefineFeature(target, n, cols) => {
                let cols = cols.iter().map(|c| ColumnDef::parse(c)).collect::<Result<Vec<_>, _>>().map_err(e)?;
                cat.create_feature(target, n, cols).map_err(e)?;
            }
            Step::CreateDataset(key, desc, types) => {
                let (d, _) = cat.create_dataset(desc, types, None).map_err(e)?;
                names.insert(key.into(), d.to_string());
            }
            Step::AddMembers(d, ms) => {
                cat.add_members(&rid(d)?, &rids(ms)?, None).map_err(e)?;
            }
            Step::RemoveMembers(d, ms) => {
                cat.remove_members(&rid(d)?, &rids(ms)?, None).map_err(e)?;
            }
            Step::Bump(d, level) => {
                cat.increment_version(&rid(d)?, level.parse().map_err(e)?, "", None).map_err(e)?;
            }
            Step::Versions(d) => {
                cat.list_versions(&rid(d)?).map_err(e)?;
            }
            Step::Members(d, v) => {
                let v = if v.is_empty() { None } else { Some(v.parse().map_err(e)?) };
                cat.dataset_members(&rid(d)?, v, false).map_err(e)?;
            }
            Step::Disjoint(ds) => {
                cat.check_disjoint(&rids(ds)?, true).map_err(e)?;
            }
            Step::Publish(d) => {
                self.0.publish_dataset(&rid(d)?, None).map_err(e)?;
            }
        }
        Ok(())
    }
}

struct Cli {
    home: PathBuf,
    catalog: PathBuf,
    scratch: PathBuf,
}

impl Cli {
    fn run(&self, args: &[String]) -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_provcat"))
            .arg("--catalog")
            .arg(&self.catalog)
            .args(args)
            .env("HOME", &self.home)
            .output()
            .map_err(e)?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim_end().to_string())
    }
}

impl Interface for Cli {
    fn step(&mut self, step: Step, names: &mut BTreeMap<String, String>) -> Result<(), String> {
        let s = |x: &str| x.to_string();
        let args: Vec<String> = match step {
            Step::DefineTable(name, kind, cols) => {
                let mut a = vec![s("schema"), s("define-table"), s(name), s("--kind"), s(kind)];
                for c in cols {
                    a.extend([s("-c"), s(c)]);
                }
                a
            }
            Step::CreateVocab(n, p) => vec![s("vocab"), s("create"), s(n), s(p)],
            Step::AddTerm(v, n, syn) => {
                let mut a = vec![s("vocab"), s("add"), s(v), s(n)];
                for x in syn {
                    a.extend([s("-s"), s(x)]);
                }
                a
            }
            Step::FindTerm(v, t) => vec![s("vocab"), s("find"), s(v), s(t)],
            Step::RegisterWorkflow(n, t) => vec![
                s("workflow"),
                s("register"),
                s("--name"),
                s(n),
                s("--url"),
                format!("https://example.org/{n}"),
                s("--type"),
                s(t),
                s("--checksum"),
                sha256_hex(n.as_bytes()),
            ],
            Step::DefineFeature(target, n, cols) => {
                let mut a = vec![s("feature"), s("define"), s(target), s(n)];
                for c in cols {
                    a.extend([s("-c"), s(c)]);
                }
                a
            }
            Step::CreateDataset(key, desc, types) => {
                let mut a = vec![s("dataset"), s("create"), s("--description"), s(desc)];
                for t in types {
                    a.extend([s("--type"), s(t)]);
                }
                let rid = self.run(&a)?;
                names.insert(key.into(), rid);
                return Ok(());
            }
            Step::AddMembers(d, ms) => {
                let mut a = vec![s("dataset"), s("add-members"), resolve(names, d)];
                a.extend(resolve_all(names, ms));
                a
            }
            Step::RemoveMembers(d, ms) => {
                let mut a = vec![s("dataset"), s("remove-members"), resolve(names, d)];
                a.extend(resolve_all(names, ms));
                a
            }
            Step::Bump(d, level) => vec![s("dataset"), s("bump"), resolve(names, d), s("--level"), s(level)],
            Step::Versions(d) => vec![s("dataset"), s("versions"), resolve(names, d)],
            Step::Members(d, v) => {
                let mut a = vec![s("dataset"), s("members"), resolve(names, d)];
                if !v.is_empty() {
                    a.extend([s("--version"), s(v)]);
                }
                a
            }
            Step::Disjoint(ds) => {
                let mut a = vec![s("dataset"), s("check-disjoint")];
                a.extend(resolve_all(names, ds));
                a
            }
            Step::Publish(d) => {
                let dest = self.scratch.join(format!("bag-{}", resolve(names, d)));
                vec![
                    s("bag"),
                    s("export"),
                    resolve(names, d),
                    s("--dest"),
                    dest.to_string_lossy().into_owned(),
                    s("--register"),
                ]
            }
        };
        self.run(&args).map(|_| ())
    }
}

struct Http {
    base: String,
}

impl Http {
    fn call(&self, method: &str, path: &str, body: Option<Value>) -> Result<Value, String> {
        let req = ureq::request(method, &format!("{}{path}", self.base));
        let resp = match body {
            Some(b) => req.set("Content-Type", "application/json").send_string(&b.to_string()),
            None => req.call(),
        };
        match resp {
            Ok(r) => serde_json::from_reader(r.into_reader()).map_err(e),
            Err(ureq::Error::Status(code, r)) => Err(format!("{method} {path}: {code} {}", r.into_string().unwrap_or_default())),
            Err(other) => Err(e(other)),
        }
    }
}

impl Interface for Http {
    fn step(&mut self, step: Step, names: &mut BTreeMap<String, String>) -> Result<(), String> {
        let cols = |cols: &[&str]| -> Result<Value, String> {
            let parsed = cols.iter().map(|c| ColumnDef::parse(c)).collect::<Result<Vec<_>, _>>().map_err(e)?;
            serde_json::to_value(parsed).map_err(e)
        };
        match step {
            Step::DefineTable(name, kind, c) => {
                self.call("POST", "/schema", Some(json!({"name": name, "kind": {"type": kind}, "columns": cols(c)?})))?;
            }
            Step::CreateVocab(n, p) => {
                self.call("POST", "/vocab", Some(json!({"name": n, "curie_prefix": p})))?;
            }
            Step::AddTerm(v, n, syn) => {
                self.call("POST", &format!("/vocab/{v}"), Some(json!({"name": n, "synonyms": syn})))?;
            }
            Step::FindTerm(v, t) => {
                self.call("GET", &format!("/vocab/{v}/{t}"), None)?;
            }
            Step::RegisterWorkflow(n, t) => {
                let body = json!({"name": n, "url": format!("https://example.org/{n}"), "workflow_type": t,
                                  "checksum": sha256_hex(n.as_bytes())});
                self.call("POST", "/workflow", Some(body))?;
            }
            Step::DefineFeature(target, n, c) => {
                self.call("POST", "/feature", Some(json!({"target": target, "name": n, "columns": cols(c)?})))?;
            }
            Step::CreateDataset(key, desc, types) => {
                let v = self.call("POST", "/dataset", Some(json!({"description": desc, "types": types})))?;
                names.insert(key.into(), v["rid"].as_str().ok_or("no rid")?.to_string());
            }
            Step::AddMembers(d, ms) => {
                let path = format!("/dataset/{}/members", resolve(names, d));
                self.call("POST", &path, Some(json!({"members": resolve_all(names, ms)})))?;
            }
            Step::RemoveMembers(d, ms) => {
                let path = format!("/dataset/{}/members", resolve(names, d));
                self.call("DELETE", &path, Some(json!({"members": resolve_all(names, ms)})))?;
            }
            Step::Bump(d, level) => {
                let path = format!("/dataset/{}/version", resolve(names, d));
                self.call("POST", &path, Some(json!({"level": level})))?;
            }
            Step::Versions(d) => {
                self.call("GET", &format!("/dataset/{}/versions", resolve(names, d)), None)?;
            }
            Step::Members(d, v) => {
                let tail = if v.is_empty() { "members".to_string() } else { format!("members@{v}") };
                self.call("GET", &format!("/dataset/{}/{tail}", resolve(names, d)), None)?;
            }
            Step::Disjoint(ds) => {
                self.call("POST", "/dataset/disjoint", Some(json!({"datasets": resolve_all(names, ds)})))?;
            }
            Step::Publish(d) => {
                self.call("POST", "/id", Some(json!({"dataset": resolve(names, d)})))?;
            }
        }
        Ok(())
    }
}

fn seed(root: &Path) -> BTreeMap<String, String> {
    let (_, images) = common::image_workspace(root, 8);
    images.iter().enumerate().map(|(i, r)| (format!("img{i}"), r.to_string())).collect()
}

fn replay_session(iface: &mut dyn Interface, mut names: BTreeMap<String, String>) -> Result<(), String> {
    for (i, step) in SESSION.iter().enumerate() {
        iface.step(*step, &mut names).map_err(|m| format!("step {}: {m}", i + 1))?;
    }
    Ok(())
}

fn interface_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let roots: Vec<PathBuf> = ["lib", "cli", "http"].iter().map(|n| dir.path().join(n)).collect();
    let seeds: Vec<_> = roots.iter().map(|r| seed(r)).collect();

    let ws = Workspace::open(&roots[0]).map_err(e)?;
    replay_session(&mut Library(ws), seeds[0].clone())?;

    let home = dir.path().join("home");
    fs::create_dir_all(&home).map_err(e)?;
    let mut cli = Cli {
        home,
        catalog: roots[1].clone(),
        scratch: dir.path().join("scratch"),
    };
    replay_session(&mut cli, seeds[1].clone())?;

    let srv = ServerHandle::start(Workspace::open(&roots[2]).map_err(e)?, "127.0.0.1:0".parse().unwrap()).map_err(e)?;
    replay_session(&mut Http { base: srv.url() }, seeds[2].clone())?;
    drop(srv);

    let dumps: Vec<String> = roots
        .iter()
        .map(|r| Workspace::open(r).map(|w| w.catalog().dump()))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    ensure!(dumps[0] == dumps[1], "library and CLI exports differ");
    ensure!(dumps[0] == dumps[2], "library and HTTP exports differ");
    let snapshot = Workspace::open(&roots[0]).map_err(e)?.catalog().current_snapshot().0;
    Ok(format!(
        "{} operations, identical {}-byte exports at snapshot {snapshot}",
        SESSION.len(),
        dumps[0].len()
    ))
}

#[test]
fn c8_interface_equivalence() {
    let t = Instant::now();
    assert!(SESSION.len() >= 25);
    report(8, "interface equivalence", t, None, interface_equivalence());
}
