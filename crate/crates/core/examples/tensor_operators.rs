//! Cumulative direct sum and Kronecker product, and how cells are ordered.

use bammit::tensor::{direct_sum_cumulative, kronecker_cumulative, FactorLayout};

fn main() -> bammit::error::Result<()> {
    let g = [1.0, 2.0];
    let e = [10.0, 20.0, 30.0];
    let y = [0.5, -0.5];

    // last factor varies fastest
    println!("g ⊕ e     = {:?}", direct_sum_cumulative(&[&g, &e])?);
    println!("g ⊗ e     = {:?}", kronecker_cumulative(&[&g, &e])?);
    println!("g ⊕ e ⊕ y = {:?}", direct_sum_cumulative(&[&g, &e, &y])?);

    let layout = FactorLayout::from_dims(&[2, 3, 2])?;
    let sum = direct_sum_cumulative(&[&g, &e, &y])?;
    for cell in layout.cells().take(4) {
        let k = layout.flatten_index(&cell)?;
        println!("cell {cell:?} -> flat {k:>2} -> {:5.1}", sum[k]);
        assert_eq!(layout.unflatten_index(k)?, cell);
    }
    Ok(())
}
