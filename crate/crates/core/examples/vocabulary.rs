//! Controlled vocabularies: terms, synonyms and lookup.

use provcat::catalog::CatalogOptions;
use provcat::vocab::NewTerm;
use provcat::Catalog;

fn main() -> provcat::Result<()> {
    let cat = Catalog::in_memory(CatalogOptions::logical());
    cat.create_vocabulary("Diagnosis", "DX")?;
    cat.add_term(
        "Diagnosis",
        NewTerm::new("glaucoma suspect")
            .synonyms(["GS", "suspect"])
            .description("Optic disc findings suggest glaucoma"),
    )?;
    cat.add_term("Diagnosis", NewTerm::new("normal"))?;
    // adding an existing term again is fine with exist_ok
    cat.add_term("Diagnosis", NewTerm::new("normal").exist_ok())?;

    for text in ["GS", "suspect", "glaucoma suspect", "normal"] {
        let t = cat.lookup_term("Diagnosis", text)?;
        println!("{text:>18} -> {} [{}]", t.name, t.curie);
    }
    match cat.lookup_term("Diagnosis", "cataract") {
        Err(e) => println!("cataract: {} ({})", e, e.code()),
        Ok(t) => println!("unexpected term {}", t.name),
    }
    println!("vocabularies: {}", cat.list_vocabularies()?.join(", "));
    Ok(())
}
