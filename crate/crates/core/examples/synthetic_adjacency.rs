//! Write the synthetic areal adjacency used as a stand-in for a 271-unit map.
//!
//! `cargo run -p vtmrf --example synthetic_adjacency -- data/areal_271.csv`

use vtmrf::graph::synthetic_areal_layout;

fn main() -> vtmrf::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/areal_271.csv".into());
    let layout = synthetic_areal_layout(271, 4, 271);
    std::fs::write(&out, layout.to_csv())?;
    let m = layout.len() as f64;
    println!(
        "{out}: {} vertices, {} edges, mean degree {:.2}",
        layout.len(),
        layout.edge_count(),
        2.0 * layout.edge_count() as f64 / m
    );
    Ok(())
}
