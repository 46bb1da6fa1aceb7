mod common;

use std::collections::BTreeSet;

use provcat::catalog::{CatalogOptions, ColumnDef, ColumnKind, Filter, TableDef};
use provcat::feature::FeatureRecord;
use provcat::vocab::NewTerm;
use provcat::provenance::{Direction, LineageEdge, Relation};
use provcat::{values, Catalog, Rid};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn catalog() -> Catalog {
    let cat = Catalog::in_memory(CatalogOptions::logical());
    cat.define_asset_table(TableDef::domain("Image")).unwrap();
    cat.define_table(TableDef::domain("Subject").column("Name", ColumnKind::Text))
        .unwrap();
    cat.add_term("Workflow_Type", NewTerm::new("training")).unwrap();
    cat
}

fn workflow(cat: &Catalog, name: &str) -> Rid {
    cat.insert_entities(
        "Workflow",
        vec![values! {
            "Name" => name,
            "URL" => format!("https://git.example.org/{name}"),
            "Workflow_Type" => "training",
            "Checksum" => "00",
        }],
    )
    .unwrap()
    .remove(0)
}

fn execution(cat: &Catalog, wf: Option<&Rid>) -> Rid {
    cat.insert_entities("Execution", vec![values! { "Status" => "running", "Workflow" => wf }])
        .unwrap()
        .remove(0)
}

fn asset(cat: &Catalog, i: usize) -> Rid {
    cat.insert_entities(
        "Image",
        vec![values! {
            "URL" => format!("/assets/Image/{i}:0"),
            "Checksum" => "00",
            "Length" => 0i64,
            "Filename" => format!("{i}.png"),
        }],
    )
    .unwrap()
    .remove(0)
}

fn link(cat: &Catalog, exec: &Rid, asset: &Rid, role: &str) {
    cat.insert_entities(
        "Execution_Asset",
        vec![values! { "Execution" => exec, "Asset" => asset, "Asset_Table" => "Image", "Asset_Role" => role }],
    )
    .unwrap();
}

#[test]
fn chain_depth_one_versus_unbounded() {
    let cat = catalog();
    let w = workflow(&cat, "w");
    let e1 = execution(&cat, Some(&w));
    let a1 = asset(&cat, 1);
    link(&cat, &e1, &a1, "output");
    let e2 = execution(&cat, None);
    link(&cat, &e2, &a1, "input");
    let a2 = asset(&cat, 2);
    link(&cat, &e2, &a2, "output");

    let one = cat.lineage(&a2, Direction::Upstream, Some(1)).unwrap();
    assert_eq!(one.nodes.len(), 2);
    let all = cat.lineage(&a2, Direction::Upstream, None).unwrap();
    let order: Vec<&Rid> = all.nodes.iter().map(|n| &n.rid).collect();
    assert_eq!(order, vec![&a2, &e2, &a1, &e1, &w]);
    assert_eq!(all.edges.len(), 4);
    let down = cat.lineage(&w, Direction::Downstream, None).unwrap();
    assert_eq!(down.nodes.len(), 5);
    assert_eq!(down.edges, all.edges);

    assert_eq!(cat.origin_of(&a2).unwrap().unwrap().rid, e2);
    assert_eq!(cat.origin_of(&a1).unwrap().unwrap().rid, e1);
    let imported = asset(&cat, 3);
    assert!(cat.origin_of(&imported).unwrap().is_none());
    assert!(cat.lineage(&a2, Direction::Upstream, Some(0)).is_err());
    assert!(cat.lineage(&"1-ZZZZ".parse().unwrap(), Direction::Upstream, None).is_err());

    let dot = all.to_dot();
    assert!(dot.contains(&format!("\"{a2}\" -> \"{e2}\" [label=\"output_of\"]")));
    assert_eq!(all.to_jsonl().lines().count(), 9);
}

#[test]
fn fresh_dataset_version_is_a_single_node() {
    let cat = catalog();
    let (d, _) = cat.create_dataset("empty", &[], None).unwrap();
    let g = cat.lineage(&d, Direction::Both, None).unwrap();
    assert_eq!(g.nodes.len(), 1);
    assert!(g.edges.is_empty());
    assert!(cat.origin_of(&d).unwrap().is_none());
    assert!(cat.executions_using(&d, None).unwrap().is_empty());
}

#[test]
fn feature_values_reach_execution_inputs() {
    let cat = catalog();
    let subjects = cat
        .insert_entities("Subject", vec![values! { "Name" => "s" }])
        .unwrap();
    cat.create_feature("Subject", "Age", vec![ColumnDef::new("Years", ColumnKind::Integer)])
        .unwrap();
    let w = workflow(&cat, "w");
    let producer = execution(&cat, Some(&w));
    let img = asset(&cat, 0);
    let (d, _) = cat.create_dataset("inputs", &[], Some(&producer)).unwrap();
    let v = cat.add_members(&d, std::slice::from_ref(&img), Some(&producer)).unwrap();
    let dv = cat.dataset_version(&d, Some(v)).unwrap();
    let e = execution(&cat, Some(&w));
    cat.insert_entities("Execution_Dataset", vec![values! { "Execution" => &e, "Dataset_Version" => &dv.rid }])
        .unwrap();
    let fv = cat
        .add_feature_values(&e, "Subject", "Age", vec![FeatureRecord::new(subjects[0].clone(), values! { "Years" => 40i64 })])
        .unwrap()
        .remove(0);
    let g = cat.lineage(&fv, Direction::Upstream, None).unwrap();
    for r in [&e, &dv.rid, &w, &producer, &img] {
        assert!(g.contains(r), "{r} missing");
    }
    assert_eq!(cat.origin_of(&fv).unwrap().unwrap().rid, e);
    assert_eq!(cat.origin_of(&dv.rid).unwrap().unwrap().rid, producer);
    let users = cat.executions_using(&d, Some(v)).unwrap();
    assert_eq!(users.iter().map(|x| &x.rid).collect::<Vec<_>>(), vec![&e]);
}

/// All stored links as edges, read through public queries only.
fn brute_force_edges(cat: &Catalog) -> BTreeSet<LineageEdge> {
    let mut out = BTreeSet::new();
    let e = |src: Rid, dst: Rid, relation| LineageEdge { src, dst, relation };
    for r in cat.query("Execution", &Filter::all(), None).unwrap() {
        if let Some(w) = r.rid_at("Workflow") {
            out.insert(e(r.rid.clone(), w, Relation::UsesWorkflow));
        }
    }
    for r in cat.query("Execution_Asset", &Filter::all(), None).unwrap() {
        let rel = if r.text("Asset_Role") == Some("output") {
            Relation::OutputOf
        } else {
            Relation::InputTo
        };
        out.insert(e(r.rid_at("Asset").unwrap(), r.rid_at("Execution").unwrap(), rel));
    }
    for r in cat.query("Execution_Dataset", &Filter::all(), None).unwrap() {
        out.insert(e(r.rid_at("Dataset_Version").unwrap(), r.rid_at("Execution").unwrap(), Relation::InputTo));
    }
    for d in cat.list_datasets().unwrap() {
        for v in cat.list_versions(&d.rid).unwrap() {
            if let Some(x) = &v.execution {
                out.insert(e(v.rid.clone(), x.clone(), Relation::GeneratedBy));
            }
            for m in cat.dataset_members(&d.rid, Some(v.version), false).unwrap() {
                out.insert(e(m.rid, v.rid.clone(), Relation::MemberOf));
            }
        }
    }
    for f in cat.list_features(None).unwrap() {
        for r in cat.query(&f.feature_table, &Filter::all(), None).unwrap() {
            out.insert(e(r.rid.clone(), r.rid_at("Execution").unwrap(), Relation::GeneratedBy));
        }
    }
    out
}

/// (upstream end, downstream end): inputs and members feed what they
/// point at; everything else points at its origin.
fn up_down(e: &LineageEdge) -> (&Rid, &Rid) {
    match e.relation {
        Relation::InputTo | Relation::MemberOf => (&e.src, &e.dst),
        Relation::OutputOf | Relation::GeneratedBy | Relation::UsesWorkflow => (&e.dst, &e.src),
    }
}

/// Reachability by fixpoint iteration over the edge list.
fn closure(edges: &BTreeSet<LineageEdge>, start: &Rid, upstream: bool) -> BTreeSet<Rid> {
    let mut reached = BTreeSet::from([start.clone()]);
    loop {
        let before = reached.len();
        for edge in edges {
            let (up, down) = up_down(edge);
            let (from, to) = if upstream { (down, up) } else { (up, down) };
            if reached.contains(from) {
                reached.insert(to.clone());
            }
        }
        if reached.len() == before {
            return reached;
        }
    }
}

#[test]
fn lineage_matches_transitive_closure_on_random_catalogs() {
    let mut rng = StdRng::seed_from_u64(0x11ea6e);
    for case in 0..25 {
        let cat = catalog();
        let subject = cat
            .insert_entities("Subject", vec![values! { "Name" => "s" }])
            .unwrap()
            .remove(0);
        cat.create_feature("Subject", "Score", vec![ColumnDef::new("Value", ColumnKind::Float)])
            .unwrap();
        let workflows: Vec<Rid> = (0..rng.gen_range(1..3)).map(|i| workflow(&cat, &format!("w{i}"))).collect();
        let execs: Vec<Rid> = (0..rng.gen_range(1..6))
            .map(|_| {
                let w = (rng.gen_bool(0.8)).then(|| &workflows[rng.gen_range(0..workflows.len())]);
                execution(&cat, w)
            })
            .collect();
        let assets: Vec<Rid> = (0..rng.gen_range(1..10)).map(|i| asset(&cat, i)).collect();
        for a in &assets {
            for ex in &execs {
                if rng.gen_bool(0.2) {
                    link(&cat, ex, a, if rng.gen_bool(0.5) { "input" } else { "output" });
                }
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            let by = rng.gen_bool(0.5).then(|| &execs[rng.gen_range(0..execs.len())]);
            let (d, _) = cat.create_dataset("d", &[], by).unwrap();
            let picked: Vec<Rid> = assets.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
            if !picked.is_empty() {
                cat.add_members(&d, &picked, by).unwrap();
            }
            for v in cat.list_versions(&d).unwrap() {
                for ex in &execs {
                    if rng.gen_bool(0.2) {
                        cat.insert_entities(
                            "Execution_Dataset",
                            vec![values! { "Execution" => ex, "Dataset_Version" => &v.rid }],
                        )
                        .unwrap();
                    }
                }
            }
        }
        for ex in &execs {
            if rng.gen_bool(0.3) {
                cat.add_feature_values(ex, "Subject", "Score", vec![FeatureRecord::new(subject.clone(), values! { "Value" => 0.5 })])
                    .unwrap();
            }
        }

        let edges = brute_force_edges(&cat);
        let mut nodes: BTreeSet<Rid> = edges.iter().flat_map(|e| [e.src.clone(), e.dst.clone()]).collect();
        nodes.extend(assets.iter().cloned());
        assert!(nodes.len() <= 60, "case {case}: {} nodes", nodes.len());
        for n in &nodes {
            for upstream in [true, false] {
                let dir = if upstream { Direction::Upstream } else { Direction::Downstream };
                let g = cat.lineage(n, dir, None).unwrap();
                let got: BTreeSet<Rid> = g.nodes.iter().map(|x| x.rid.clone()).collect();
                assert_eq!(got, closure(&edges, n, upstream), "case {case} node {n} upstream={upstream}");
                let want_edges: BTreeSet<LineageEdge> = edges
                    .iter()
                    .filter(|e| {
                        let (up, down) = up_down(e);
                        got.contains(if upstream { down } else { up })
                    })
                    .cloned()
                    .collect();
                assert_eq!(g.edges.iter().cloned().collect::<BTreeSet<_>>(), want_edges);
            }
        }
        // Every stored edge appears one hop downstream of its upstream end
        // and one hop upstream of its downstream end.
        for e in &edges {
            let (up, down) = up_down(e);
            assert!(cat.lineage(up, Direction::Downstream, Some(1)).unwrap().edges.contains(e));
            assert!(cat.lineage(down, Direction::Upstream, Some(1)).unwrap().edges.contains(e));
        }
    }
}
