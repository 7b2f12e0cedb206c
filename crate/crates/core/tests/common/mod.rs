#![allow(dead_code)]

use gvo::expr::{AddressExpr, Axis, Coord};
use gvo::footprint::{CacheLevel, CollaborativeGroup};
use gvo::kernel::{Access, Field, KernelDescriptor, LaunchConfig};
use rand::seq::SliceRandom;
use rand::Rng;

const COORDS: [Coord; 6] = [Coord::TidX, Coord::TidY, Coord::TidZ, Coord::BidX, Coord::BidY, Coord::BidZ];

/// Random launch with at most `max_threads` threads per block.
pub fn random_launch(rng: &mut impl Rng, max_threads: u32) -> LaunchConfig {
    loop {
        let block = [rng.gen_range(1..=16), rng.gen_range(1..=8), rng.gen_range(1..=4)];
        if block.iter().product::<u32>() <= max_threads {
            let grid = [rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=3)];
            return LaunchConfig::new(block, grid, 1);
        }
    }
}

fn affine_term(rng: &mut impl Rng, es: i64) -> AddressExpr {
    let mut e = AddressExpr::constant(rng.gen_range(-4..=4) * es);
    for c in COORDS {
        if rng.gen_bool(0.6) {
            let k = rng.gen_range(-3..=24) * es;
            e = e + AddressExpr::coord(c) * k;
        }
    }
    if rng.gen_bool(0.2) {
        e = e + AddressExpr::block_dim(Axis::X) * AddressExpr::coord(Coord::BidY) * es;
    }
    e
}

/// Address expression `base + affine(coords)`, optionally with one floor
/// division or modulo when `affine_only` is false.
pub fn random_expr(rng: &mut impl Rng, field: &str, es: i64, affine_only: bool) -> AddressExpr {
    let mut body = affine_term(rng, es);
    if !affine_only && rng.gen_bool(0.3) {
        let d = *[2i64, 3, 4, 8].choose(rng).unwrap();
        let inner = AddressExpr::global_index(Axis::X);
        let wrapped = if rng.gen_bool(0.5) {
            inner.floor_div(d).unwrap()
        } else {
            inner.modulo(d).unwrap()
        };
        body = body + wrapped * (es * rng.gen_range(1..=16));
    }
    AddressExpr::base(field) + body
}

pub fn random_kernel(rng: &mut impl Rng, max_threads: u32, affine_only: bool) -> KernelDescriptor {
    let nfields = rng.gen_range(1..=3);
    let fields: Vec<Field> = (0..nfields)
        .map(|i| {
            let es = if rng.gen_bool(0.5) { 8 } else { 4 };
            let mut f = Field::dense(format!("f{i}"), es, [64, 16, 8]);
            f.alignment = rng.gen_range(0..32) * es as i64;
            f
        })
        .collect();
    let naccesses = rng.gen_range(1..=4);
    let accesses = (0..naccesses)
        .map(|_| {
            let f = fields.choose(rng).unwrap();
            let expr = random_expr(rng, &f.name, f.element_size as i64, affine_only);
            let mut a = if rng.gen_bool(0.7) {
                Access::load(f.name.clone(), expr)
            } else {
                Access::store(f.name.clone(), expr)
            };
            a.multiplicity = rng.gen_range(1..=2);
            a
        })
        .collect();
    let k = KernelDescriptor {
        name: "random".into(),
        fields,
        accesses,
        launch: random_launch(rng, max_threads),
        flops_per_lup: 1.0,
    };
    k.validate().unwrap();
    k
}

/// Consecutive blocks holding at most `max_threads` threads in total.
pub fn random_group(rng: &mut impl Rng, launch: &LaunchConfig, max_threads: u64) -> CollaborativeGroup {
    let n = launch.block_count();
    let per = launch.threads_per_block();
    let max_blocks = (max_threads / per).clamp(1, n);
    let len = rng.gen_range(1..=max_blocks);
    let start = rng.gen_range(0..=n - len);
    CollaborativeGroup {
        level: if len == 1 { CacheLevel::L1 } else { CacheLevel::L2 },
        blocks: (start..start + len).collect(),
    }
}

