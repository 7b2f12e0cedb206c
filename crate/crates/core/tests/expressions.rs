use gvo::expr::{parse, AddressExpr, Axis, BaseMap, Coord};
use gvo::{LaunchConfig, ThreadCoord};
use proptest::prelude::*;

const COORDS: [Coord; 6] = [Coord::TidX, Coord::TidY, Coord::TidZ, Coord::BidX, Coord::BidY, Coord::BidZ];
const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

fn leaf() -> impl Strategy<Value = AddressExpr> {
    prop_oneof![
        (-64i64..64).prop_map(AddressExpr::constant),
        (0..6usize).prop_map(|i| AddressExpr::coord(COORDS[i])),
        (0..3usize).prop_map(|i| AddressExpr::block_dim(AXES[i])),
        (0..3usize).prop_map(|i| AddressExpr::grid_dim(AXES[i])),
        Just(AddressExpr::base("A")),
    ]
}

fn tree() -> impl Strategy<Value = AddressExpr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), 1i64..9).prop_map(|(a, d)| a.floor_div(d).unwrap()),
            (inner, 1i64..9).prop_map(|(a, d)| a.modulo(d).unwrap()),
        ]
    })
}

/// Trees that are affine by construction: products always have a constant side.
fn linear_tree() -> impl Strategy<Value = AddressExpr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), -16i64..16).prop_map(|(a, k)| a * k),
            (-16i64..16, inner).prop_map(|(k, a)| AddressExpr::constant(k) * a),
        ]
    })
}

fn launch() -> impl Strategy<Value = LaunchConfig> {
    ([1u32..9, 1u32..5, 1u32..4], [1u32..5, 1u32..4, 1u32..3]).prop_map(|(b, g)| LaunchConfig::new(b, g, 1))
}

fn coords_in(launch: LaunchConfig) -> impl Strategy<Value = Vec<ThreadCoord>> {
    let [bx, by, bz] = launch.block;
    let [gx, gy, gz] = launch.grid;
    prop::collection::vec(
        ([0..bx, 0..by, 0..bz], [0..gx, 0..gy, 0..gz]).prop_map(|(t, b)| ThreadCoord::new(t, b)),
        1..24,
    )
}

fn bases() -> BaseMap {
    [("A".to_string(), 4096)].into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bulk_matches_scalar((e, l, cs) in (tree(), launch()).prop_flat_map(|(e, l)| (Just(e), Just(l), coords_in(l)))) {
        let b = bases();
        let scalar: Result<Vec<i64>, _> = cs.iter().map(|c| e.eval_scalar(c, &l, &b)).collect();
        let bulk = gvo::expr::evaluate(&e, &cs, &l, &b);
        if let Ok(s) = &scalar {
            prop_assert_eq!(bulk.as_ref().ok(), Some(s));
        }
        let again: Result<Vec<i64>, _> = cs.iter().map(|c| e.eval_scalar(c, &l, &b)).collect();
        prop_assert_eq!(scalar, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn linear_trees_obey_superposition(
        e in linear_tree(),
        l in launch(),
        c in prop::array::uniform6(0i64..8),
        axis in 0usize..6,
        d1 in 0i64..8,
        d2 in 0i64..8,
    ) {
        let bound = e.bind(&l, &bases()).unwrap();
        let form = *bound.affine().expect("products with a constant side are affine");
        let shifted = |d: i64| {
            let mut v = c;
            v[axis] += d;
            e_eval(&e, &v, &l)
        };
        let f0 = shifted(0);
        prop_assert_eq!(shifted(d1 + d2) - f0, (shifted(d1) - f0) + (shifted(d2) - f0));
        prop_assert_eq!(shifted(d1) - f0, form.coeffs[axis] * d1);
        prop_assert_eq!(form.eval(&c).unwrap(), f0);
    }

    #[test]
    fn render_then_parse_is_identity(e in tree()) {
        let text = e.to_string();
        let back = parse(&text, &["A"]).unwrap();
        prop_assert_eq!(back, e, "rendered as {}", text);
    }
}

fn e_eval(e: &AddressExpr, c: &[i64; 6], l: &LaunchConfig) -> i64 {
    let tc = ThreadCoord::new(
        [c[0] as u32, c[1] as u32, c[2] as u32],
        [c[3] as u32, c[4] as u32, c[5] as u32],
    );
    e.eval_scalar(&tc, l, &bases()).unwrap()
}
