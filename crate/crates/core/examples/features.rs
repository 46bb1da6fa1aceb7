//! Attach feature values to records, one set per execution.

use std::fs;

use provcat::asset::AssetMeta;
use provcat::catalog::{CatalogOptions, ColumnDef, ColumnKind, TableDef};
use provcat::execution::{ExecutionConfig, ExecutionStatus, WorkflowRef};
use provcat::store::sha256_hex;
use provcat::vocab::NewTerm;
use provcat::workflow::WorkflowSpec;
use provcat::{Filter, Workspace};

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path().join("catalog"), CatalogOptions::logical())?;
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Image"))?;
    let images: Vec<_> = (0..3)
        .map(|i| ws.upload_asset_bytes("Image", &format!("{i}.png"), &[i; 8], AssetMeta::default()).map(|a| a.rid))
        .collect::<Result<_, _>>()?;
    cat.create_vocabulary("Grade", "GR")?;
    for g in ["mild", "moderate", "severe"] {
        cat.add_term("Grade", NewTerm::new(g))?;
    }
    cat.add_term("Workflow_Type", NewTerm::new("grading"))?;
    let def = cat.create_feature(
        "Image",
        "Severity",
        vec![
            ColumnDef::new("Grade", ColumnKind::TermRef("Grade".into())),
            ColumnDef::nullable("Confidence", ColumnKind::Float),
        ],
    )?;
    println!("feature table {}", def.feature_table);

    let wf = WorkflowSpec::new("manual_grading", "https://example.org/grading", "grading").checksum(sha256_hex(b"grading"));
    for (rater, grades) in [("r1", ["mild", "severe", "mild"]), ("r2", ["moderate", "severe", "mild"])] {
        let cfg = ExecutionConfig::new(WorkflowRef::Spec(wf.clone())).parameter("rater", rater);
        let run = ws.execution_begin(&cfg, &dir.path().join(rater))?;
        let mut csv = String::from("Image,Grade,Confidence\n");
        for (img, g) in images.iter().zip(grades) {
            csv.push_str(&format!("{img},{g},0.9\n"));
        }
        fs::write(run.feature_dir("Image", "Severity")?.join("values.csv"), csv)?;
        let out = run.finish(ExecutionStatus::Completed, None)?;
        println!("{rater}: {:?}", out.features);
    }

    for row in cat.feature_values("Image", "Severity", &Filter::all().eq("Image", images[0].as_str()), None)? {
        println!(
            "{} graded {} by execution {}",
            row.text("Image").unwrap_or(""),
            row.text("Grade").unwrap_or(""),
            row.text("Execution").unwrap_or("")
        );
    }
    Ok(())
}
