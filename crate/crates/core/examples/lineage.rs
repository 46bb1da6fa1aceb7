//! Trace where a model came from, and what a dataset fed into.

use std::fs;

use provcat::asset::AssetMeta;
use provcat::catalog::{CatalogOptions, TableDef};
use provcat::execution::{ExecutionConfig, ExecutionStatus, WorkflowRef};
use provcat::provenance::Direction;
use provcat::store::sha256_hex;
use provcat::vocab::NewTerm;
use provcat::workflow::WorkflowSpec;
use provcat::Workspace;

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path().join("catalog"), CatalogOptions::logical())?
        .with_cache_dir(dir.path().join("cache"));
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Image"))?;
    cat.define_asset_table(TableDef::domain("Model"))?;
    cat.add_term("Workflow_Type", NewTerm::new("training"))?;
    let img = ws.upload_asset_bytes("Image", "a.png", b"pixels", AssetMeta::default())?;
    let (d, _) = cat.create_dataset("tiny", &["training"], None)?;
    cat.add_members(&d, &[img.rid], None)?;

    let wf = WorkflowSpec::new("fit", "https://example.org/fit.py", "training").checksum(sha256_hex(b"fit"));
    let run = ws.execution_begin(&ExecutionConfig::new(WorkflowRef::Spec(wf)).dataset(d.clone(), None), &dir.path().join("run"))?;
    fs::write(run.output_dir("Model")?.join("model.bin"), b"weights")?;
    let out = run.finish(ExecutionStatus::Completed, None)?;
    let model = &out.outputs[0].rid;

    let up = cat.lineage(model, Direction::Upstream, None)?;
    println!("upstream of {model}:");
    for e in &up.edges {
        println!("  {} -{}-> {}", e.src, e.relation.as_str(), e.dst);
    }
    println!("{}", up.to_dot());

    let down = cat.lineage(&d, Direction::Downstream, Some(2))?;
    let labels: Vec<String> = down.nodes.iter().map(|n| n.label()).collect();
    println!("downstream of {d}: {}", labels.join(", "));
    println!("executions using {d}: {}", cat.executions_using(&d, None)?.len());
    Ok(())
}
