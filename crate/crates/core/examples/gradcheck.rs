//! Finite-difference check of every module's analytic gradients.
//!
//!     cargo run --release --example gradcheck

use stgt::gradcheck::{run, GradModule};

fn main() -> anyhow::Result<()> {
    for m in GradModule::ALL {
        let r = run(m)?;
        println!("{:<10} {:.2e} ({} coords, worst {})", m.name(), r.max_relative_error, r.coordinates, r.worst);
    }
    Ok(())
}
