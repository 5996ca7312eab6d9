use num_bigint::BigInt;
use num_rational::BigRational;
use perifract::geometry::{
    build_bonds, build_grid, cell_area_fraction, segment_crosses_centerline, segment_crosses_notch, BondState,
    DomainSpec,
};

fn q(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

/// Exact crossing test of the closed segment with `[lo, hi] x {0}`.
fn crosses_exact(x: [f64; 2], y: [f64; 2], lo: f64, hi: f64) -> bool {
    let (x1, x2, y1, y2) = (q(x[0]), q(x[1]), q(y[0]), q(y[1]));
    let zero = BigRational::from_integer(BigInt::from(0));
    if (x2 > zero && y2 > zero) || (x2 < zero && y2 < zero) {
        return false;
    }
    let (lo, hi) = (q(lo), q(hi));
    if x2 == zero && y2 == zero {
        let (a, b) = if x1 < y1 { (x1, y1) } else { (y1, x1) };
        return a <= hi && b >= lo;
    }
    let t = &x2 / (&x2 - &y2);
    let p = &x1 + t * (&y1 - &x1);
    lo <= p && p <= hi
}

#[test]
fn centerline_predicate_matches_rational_arithmetic() {
    let pts: Vec<[f64; 2]> = (-8..=8)
        .flat_map(|i| (-8..=8).map(move |j| [i as f64 / 4.0, j as f64 / 4.0]))
        .collect();
    let (lo, hi) = (0.0, 1.25);
    let mut checked = 0;
    for (a, x) in pts.iter().enumerate() {
        for y in &pts[a..] {
            assert_eq!(
                segment_crosses_centerline(*x, *y, lo, hi),
                crosses_exact(*x, *y, lo, hi),
                "{x:?} {y:?}"
            );
            checked += 1;
        }
    }
    assert!(checked > 40_000);
}

#[test]
fn endpoint_on_initial_crack_line_counts() {
    let spec = DomainSpec::new(0.1, 0.1, 0.02, 2e-3, 4);
    assert!(segment_crosses_notch([0.01, 0.0], [0.01, 0.003], &spec));
    assert!(segment_crosses_notch([0.02, 0.0], [0.021, 0.003], &spec));
    assert!(!segment_crosses_notch([0.021, 0.0005], [0.021, 0.003], &spec));
}

/// Exact fraction of `n x n` subsample points of the offset cell inside the
/// open disk of radius `m` cells.
fn fraction_exact(di: i64, dj: i64, m: i64, n: i64) -> BigRational {
    let mut inside = 0i64;
    let r2 = BigRational::from_integer(BigInt::from(m * m));
    for kx in 0..n {
        for ky in 0..n {
            let x = BigRational::new(BigInt::from(di * 2 * n - n + 2 * kx + 1), BigInt::from(2 * n));
            let y = BigRational::new(BigInt::from(dj * 2 * n - n + 2 * ky + 1), BigInt::from(2 * n));
            if &x * &x + &y * &y < r2 {
                inside += 1;
            }
        }
    }
    BigRational::new(BigInt::from(inside), BigInt::from(n * n))
}

#[test]
fn area_fractions_match_rational_counts() {
    for m in [2i64, 3, 4] {
        for n in [2i64, 5, 8] {
            for di in -m..=m {
                for dj in 0..=m {
                    let exact = fraction_exact(di, dj, m, n);
                    let f = cell_area_fraction(di, dj, m, n);
                    // f is the correctly rounded quotient of the exact count
                    let count = exact.numer() * (BigInt::from(n * n) / exact.denom());
                    let count: i64 = count.try_into().unwrap();
                    assert_eq!(f, count as f64 / (n * n) as f64, "m={m} n={n} ({di},{dj})");
                }
            }
        }
    }
}

#[test]
fn straddling_cell_is_about_half_covered() {
    // the cell centered exactly on the horizon circle along an axis
    let n = 8;
    let f = cell_area_fraction(4, 0, 4, n);
    assert!((f - 0.5).abs() <= 2.0 / (n * n) as f64, "{f}");
}

#[test]
fn excluded_bonds_match_brute_force() {
    let mut spec = DomainSpec::new(0.02, 0.02, 0.008, 2e-3, 4);
    spec.d = spec.h();
    let grid = build_grid(&spec).unwrap();
    let bonds = build_bonds(&grid, &spec);
    let mut excluded = 0;
    for i in 0..grid.len() {
        for k in bonds.range(i) {
            let j = bonds.neighbor[k] as usize;
            let (x, y) = (grid.positions[i], grid.positions[j]);
            // a bond is cut when it touches the initial crack line or passes
            // through the notch, sampled densely along its length
            let mut cut = segment_crosses_centerline(x, y, 0.0, spec.ell0);
            for s in 0..=400 {
                let t = s as f64 / 400.0;
                cut |= spec.in_notch([x[0] + t * (y[0] - x[0]), x[1] + t * (y[1] - x[1])]);
            }
            if cut {
                excluded += 1;
            }
            assert_eq!(bonds.state[k] == BondState::Excluded, cut, "bond {i}->{j}");
        }
    }
    assert!(excluded > 0);
}
