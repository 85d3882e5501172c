//! The analytic cube benchmark: a smooth solenoidal velocity field with a
//! separable pressure on (0,1)^3, and the forcing that balances the momentum
//! equation.

/// Mean of sin(4x)sin(8y)sin(2z) over the unit cube, removed so the exact
/// pressure integrates to zero.
fn pressure_mean() -> f64 {
    let int = |a: f64| (1.0 - a.cos()) / a;
    int(4.0) * int(8.0) * int(2.0)
}

#[cfg(test)]
fn int_sin(a: f64) -> f64 {
    (1.0 - a.cos()) / a
}

pub fn cube_velocity(x: [f64; 3]) -> [f64; 3] {
    [
        -4.0 * (4.0 * x[2]).cos(),
        8.0 * (8.0 * x[0]).cos(),
        -2.0 * (2.0 * x[1]).cos(),
    ]
}

pub fn cube_pressure(x: [f64; 3]) -> f64 {
    (4.0 * x[0]).sin() * (8.0 * x[1]).sin() * (2.0 * x[2]).sin() - pressure_mean()
}

/// f = -lap(u) + grad(p).
pub fn cube_forcing(x: [f64; 3]) -> [f64; 3] {
    let (s4x, c4x) = (4.0 * x[0]).sin_cos();
    let (s8y, c8y) = (8.0 * x[1]).sin_cos();
    let (s2z, c2z) = (2.0 * x[2]).sin_cos();
    [
        -64.0 * (4.0 * x[2]).cos() + 4.0 * c4x * s8y * s2z,
        512.0 * (8.0 * x[0]).cos() + 8.0 * s4x * c8y * s2z,
        -8.0 * (2.0 * x[1]).cos() + 2.0 * s4x * s8y * c2z,
    ]
}
