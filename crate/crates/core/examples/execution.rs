//! Run a script as a recorded execution: inputs are staged, outputs are
//! uploaded and linked when it finishes.

use std::collections::BTreeMap;
use std::fs;

use provcat::asset::AssetMeta;
use provcat::catalog::{CatalogOptions, TableDef};
use provcat::execution::{ExecutionConfig, ExecutionStatus, WorkflowRef};
use provcat::store::sha256_hex;
use provcat::vocab::NewTerm;
use provcat::workflow::WorkflowSpec;
use provcat::Workspace;

const SCRIPT: &str = "#!/bin/sh\nls \"$DERIVA_ML_EXEC_ROOT\"\ncat \"$DERIVA_ML_PARAMETERS\" > outputs/Model/params.json\n";

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path().join("catalog"), CatalogOptions::logical())?
        .with_cache_dir(dir.path().join("cache"));
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Image"))?;
    cat.define_asset_table(TableDef::domain("Model"))?;
    cat.add_term("Workflow_Type", NewTerm::new("training"))?;
    let img = ws.upload_asset_bytes("Image", "a.png", b"pixels", AssetMeta::default())?;
    let (d, _) = cat.create_dataset("one image", &[], None)?;
    cat.add_members(&d, &[img.rid], None)?;

    let script = dir.path().join("train.sh");
    fs::write(&script, SCRIPT)?;
    let wf = cat.register_workflow(
        &WorkflowSpec::new("train", "https://example.org/train.sh", "training").checksum(sha256_hex(SCRIPT.as_bytes())),
        None,
    )?;

    let config = ExecutionConfig::new(WorkflowRef::Rid(wf.rid))
        .dataset(d.clone(), None)
        .parameter("learning_rate", 0.01)
        .description("example run");
    let run = ws.execution_begin(&config, &dir.path().join("run"))?;
    println!("execution {} staged {} at {}", run.rid(), d, run.dataset_path(&d).unwrap().display());
    run.output_dir("Model")?;
    let status = run.run_script(&script, &BTreeMap::new())?;
    println!("script exited with {status}");
    let outcome = run.finish(ExecutionStatus::Completed, None)?;

    let exec = cat.execution(&outcome.execution.rid)?;
    println!("status: {} {}", exec.status, exec.status_detail.unwrap_or_default());
    for link in cat.execution_assets(&exec.rid, None)? {
        println!("  {:>6} {} {}", link.role, link.table, link.asset);
    }
    for v in cat.execution_datasets(&exec.rid)? {
        println!("  input dataset {}@{}", v.dataset, v.version);
    }
    println!("stored config pins: {:?}", ws.execution_config(&exec.rid)?.datasets);
    Ok(())
}
