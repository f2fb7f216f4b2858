//! Fixtures shared by the benchmarks.

use almostgraph::chart::ChartContext;
use almostgraph::config::bundled;
use almostgraph::fnspace::GridFnN;
use almostgraph::sample::{sample_o, sample_u, sample_x0_o, stream};

pub struct Fixture {
    pub ctx: ChartContext,
    /// Members of U, of the chart image, and of X0 in the chart image.
    pub phi: GridFnN,
    pub chi: GridFnN,
    pub zeta: GridFnN,
}

/// A bundled system with one sample of each kind, drawn with seed 42.
///
/// Levels touched while drawing the samples are already built, so timings
/// exclude lazy level construction.
pub fn fixture(name: &str) -> Fixture {
    let ctx = bundled(name).unwrap().context().unwrap();
    let phi = sample_u(&ctx, &mut stream(42, 1, 0), 1.0).unwrap();
    let chi = sample_o(&ctx, &mut stream(42, 2, 0), 1.0).unwrap();
    let zeta = sample_x0_o(&ctx, &mut stream(42, 5, 0), 1.0).unwrap();
    ctx.a_map(&phi).unwrap();
    ctx.b_map(&chi).unwrap();
    ctx.lift(&zeta).unwrap();
    Fixture { ctx, phi, chi, zeta }
}
