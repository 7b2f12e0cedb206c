//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use gvo::estimate::{rank_geometries, sweep_geometries, write_ranking_csv, KernelFamily};
use gvo::expr::{AddressExpr, Coord};
use gvo::fit::{
    calibrate, calibrate_all, FitRole, FitSet, GompertzParams, MeasuredLevel, Measurement, RatioObservation,
};
use gvo::footprint::{grid_iteration, naive_footprint_oracle, CollaborativeGroup, KindFilter};
use gvo::kernel::{
    enumerate_sweep, generate_lbm_d3q15, generate_star_stencil, is_pdf_field, Access, Field, Folding,
    KernelDescriptor, LaunchConfig, LbmParams, StencilParams, SweepConfig, SweepConstraints,
};
use gvo::volume::{assemble, l1_register_cycles, Geometry, LevelVolumes, MeasureOptions};
use gvo::{AccessKind, MachineDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Sweep = Vec<(SweepConfig, Geometry)>;

const MIB: u64 = 1024 * 1024;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stencil_sweep_128(machine: &MachineDescriptor) -> Sweep {
    let fam = KernelFamily::Stencil(StencilParams::range4([128, 128, 128], [1, 1, 1], Folding::None));
    let configs = enumerate_sweep(1024, &SweepConstraints::stencil()).unwrap();
    sweep_geometries(&fam, &configs, machine, &MeasureOptions::default()).unwrap()
}

fn stencil_shapes_512(machine: &MachineDescriptor) -> Sweep {
    let mut p = StencilParams::range4([512, 512, 512], [1, 1, 1], Folding::None);
    p.leading_dim = Some(640);
    let constraints = SweepConstraints {
        foldings: vec![Folding::None],
        ..SweepConstraints::stencil()
    };
    let configs = enumerate_sweep(1024, &constraints).unwrap();
    sweep_geometries(&KernelFamily::Stencil(p), &configs, machine, &MeasureOptions::default()).unwrap()
}

fn bank_triptych() -> Outcome {
    let f = Field::dense("a", 8, [32 * 32, 1, 1]);
    let tid = || AddressExpr::coord(Coord::TidX);
    let accesses = [1i64, 2, 32]
        .iter()
        .map(|&s| Access::load("a", AddressExpr::base("a") + tid() * (8 * s)))
        .collect();
    let k = KernelDescriptor {
        name: "strides".into(),
        fields: vec![f],
        accesses,
        launch: LaunchConfig::new([32, 1, 1], [1, 1, 1], 1),
        flops_per_lup: 0.0,
    };
    let est = l1_register_cycles(&k, &MachineDescriptor::v100()).map_err(|e| e.to_string())?;
    let got: Vec<f64> = est.accesses.iter().map(|a| a.cycles_per_half_warp).collect();
    check(got == [1.0, 2.0, 32.0], format!("cycles per half-warp {got:?}, expected [1, 2, 32]"))
}

fn footprint_figure() -> Outcome {
    let p = StencilParams {
        range: 1,
        grid: [2, 2, 1],
        block: [2, 2, 1],
        folding: Folding::None,
        center: false,
        leading_dim: None,
        element_size: 8,
    };
    let k = generate_star_stencil(&p).map_err(|e| e.to_string())?;
    let r = grid_iteration(&k, &CollaborativeGroup::block(0), 8, KindFilter::Loads).map_err(|e| e.to_string())?;
    let accesses = r.total_access_bytes() / 8;
    let unique = r.unique_lines();
    check(
        accesses == 16 && unique == 10,
        format!("{accesses} accesses, {unique} unique elements, expected 16 and 10"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let n = 600;
    for i in 0..n {
        let k = common::random_kernel(&mut rng, 64, i % 4 != 0);
        let group = common::random_group(&mut rng, &k.launch, 64);
        let g = [8u64, 32, 128][rng.gen_range(0..3)];
        let filter = [KindFilter::Loads, KindFilter::Stores, KindFilter::All][rng.gen_range(0..3)];
        let fast = grid_iteration(&k, &group, g, filter).map_err(|e| e.to_string())?;
        let slow = naive_footprint_oracle(&k, &group, g, filter).map_err(|e| e.to_string())?;
        if fast != slow {
            return Err(format!("kernel {i} differs at granularity {g}"));
        }
    }
    Ok(format!("{n} random kernels agree exactly"))
}

fn identity_holds(l: &LevelVolumes) -> bool {
    l.up == l.comp + l.red && l.down == l.comp + l.cap && l.cap >= 0.0 && l.cap <= l.red
}

fn volume_identities(sweep: &Sweep, machine: &MachineDescriptor) -> Outcome {
    let mut checked = 0;
    for (c, g) in sweep {
        let v = assemble(g, machine);
        let mut levels = vec![v.l2l1_load, v.l2l1_store, v.dram_load, v.dram_store];
        for f in &v.fields {
            levels.extend([f.l2l1_load, f.l2l1_store, f.dram_load, f.dram_store]);
        }
        if let Some(l) = levels.iter().find(|l| !identity_holds(l)) {
            return Err(format!("{c}: {l:?}"));
        }
        checked += levels.len();
    }
    Ok(format!("{} configurations, {checked} level breakdowns", sweep.len()))
}

fn lbm_streaming_bound() -> Outcome {
    let k = generate_lbm_d3q15(&LbmParams::new([256, 128, 128], [32, 2, 2])).map_err(|e| e.to_string())?;
    let m = MachineDescriptor::v100().with_fits(FitSet::zeroed());
    let e = gvo::estimate(&k, &m, &MeasureOptions::default()).map_err(|e| e.to_string())?;
    let pdf = e.volumes.dram_bytes_where(is_pdf_field);
    check(
        (pdf - 240.0).abs() <= 0.02 * 240.0,
        format!("pdf DRAM traffic {pdf:.2} B/LUP, expected 240 within 2%"),
    )
}

fn stencil_intensity() -> Outcome {
    let k = generate_star_stencil(&StencilParams::range4([128, 128, 128], [16, 8, 8], Folding::None))
        .map_err(|e| e.to_string())?;
    let m = MachineDescriptor::v100();
    let intensity = k.flops_per_lup / k.minimal_bytes_per_lup();
    let e = gvo::estimate(&k, &m, &MeasureOptions::default()).map_err(|e| e.to_string())?;
    check(
        k.flops_per_lup == 25.0
            && k.minimal_bytes_per_lup() == 16.0
            && intensity == 1.5625
            && intensity < m.machine_balance_flop_per_byte
            && e.perf.limiter != gvo::perf::Limiter::Fp,
        format!(
            "{} Flop, {} B, intensity {intensity}, limiter {}",
            k.flops_per_lup,
            k.minimal_bytes_per_lup(),
            e.perf.limiter
        ),
    )
}

fn volume_ordering(shapes: &Sweep, machine: &MachineDescriptor) -> Outcome {
    let mut loads: Vec<([u32; 3], f64)> =
        shapes.iter().map(|(c, g)| (c.block, assemble(g, machine).dram_load.down)).collect();
    loads.sort_by(|a, b| a.1.total_cmp(&b.1));
    let of = |b: [u32; 3]| loads.iter().find(|l| l.0 == b).unwrap().1;
    let rank = loads.iter().position(|l| l.0 == [32, 1, 32]).unwrap() + 1;
    let (a, b, c) = (of([16, 8, 8]), of([512, 2, 1]), of([2, 512, 1]));
    let quartile = loads.len() as f64 / 4.0;
    check(
        a < b && b < c && rank as f64 <= quartile,
        format!(
            "(16,8,8) {a:.1} < (512,2,1) {b:.1} < (2,512,1) {c:.1} B/LUP; (32,1,32) ranks {rank} of {}",
            loads.len()
        ),
    )
}

fn sweep_cardinality(sweep: &Sweep, machine: &MachineDescriptor) -> Outcome {
    let ranked = rank_geometries(sweep, machine).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_ranking_csv(&ranked, &mut buf).map_err(|e| e.to_string())?;
    let rows = csv::Reader::from_reader(buf.as_slice()).records().count();
    check(rows == 162, format!("{rows} ranking rows"))
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs()
}

fn params_within(got: &GompertzParams, want: &GompertzParams, tol: f64) -> bool {
    within(got.a, want.a, tol) && within(got.b, want.b, tol) && within(got.c, want.c, tol)
}

fn round_trip() -> Result<(), String> {
    let cases = [
        (GompertzParams::new(FitRole::L2Load, 1.0, 5.0, 2.0), 0.0, 3.0),
        (GompertzParams::new(FitRole::L1, 0.6, 12.0, 1.2), 0.0, 10.0),
        (GompertzParams::new(FitRole::Overmiss, 0.8, 0.3, 2.0), -0.5, 2.5),
    ];
    for (truth, lo, hi) in cases {
        let obs: Vec<RatioObservation> = (0..40)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 39.0;
                RatioObservation::new(x, truth.miss_ratio(x))
            })
            .collect();
        let fit = calibrate(truth.role, &obs).map_err(|e| e.to_string())?;
        if !params_within(&fit.params, &truth, 0.05) {
            return Err(format!("round trip {}: got {:?}", truth.role, fit.params));
        }
    }
    Ok(())
}

fn closed_loop(sweep: &Sweep) -> Result<(), String> {
    let truth = FitSet {
        l1: GompertzParams::new(FitRole::L1, 0.5, 8.0, 0.3),
        l2_load: GompertzParams::new(FitRole::L2Load, 0.8, 6.0, 1.5),
        l2_store: GompertzParams::new(FitRole::L2Store, 0.9, 10.0, 2.0),
        overmiss: GompertzParams::new(FitRole::Overmiss, 0.7, 0.2, 1.5),
    };
    let mut variants = Vec::new();
    for l1 in [64u64, 128, 256] {
        for l2 in [3u64, 6, 12] {
            let mut m = MachineDescriptor::v100();
            m.l1_capacity_bytes = l1 * 1024;
            m.l2_capacity_bytes = l2 * MIB;
            variants.push((format!("@{l1}k{l2}m"), m));
        }
    }
    let cases: Vec<(String, &Geometry, &MachineDescriptor)> = sweep
        .iter()
        .step_by(4)
        .flat_map(|(c, g)| variants.iter().map(move |(s, m)| (format!("{c}{s}"), g, m)))
        .collect();

    let mut measurements = Vec::new();
    for (key, g, m) in &cases {
        let v = assemble(g, &(*m).clone().with_fits(truth));
        for (level, kind, bytes) in [
            (MeasuredLevel::L2L1, AccessKind::Load, v.l2l1_load.down),
            (MeasuredLevel::Dram, AccessKind::Load, v.dram_load.down),
            (MeasuredLevel::Dram, AccessKind::Store, v.dram_store.down),
        ] {
            measurements.push(Measurement {
                config_key: key.clone(),
                level,
                kind,
                measured_bytes_per_lup: bytes,
            });
        }
    }
    let inputs_with = |fits: FitSet| -> Vec<_> {
        cases
            .iter()
            .map(|(key, g, m)| assemble(g, &(*m).clone().with_fits(fits)).calibration_inputs(key))
            .collect()
    };
    // The sweep output depends on the L1 fit, so calibrate twice.
    let start = FitSet::illustrative();
    let first = calibrate_all(&measurements, &inputs_with(start), &start).map_err(|e| e.to_string())?;
    let second =
        calibrate_all(&measurements, &inputs_with(first.fits), &first.fits).map_err(|e| e.to_string())?;
    for role in FitRole::ALL {
        let got = second.fits.get(role);
        if !params_within(got, truth.get(role), 0.10) {
            return Err(format!("closed loop {role}: got ({:.3}, {:.3}, {:.3})", got.a, got.b, got.c));
        }
    }
    Ok(())
}

fn gompertz_round_trip(sweep: &Sweep) -> Outcome {
    round_trip()?;
    closed_loop(sweep)?;
    Ok("synthetic fits within 5%, closed loop within 10% for all four roles".into())
}

fn monotonicity(sweeps: &[&Sweep]) -> Outcome {
    let machines: Vec<MachineDescriptor> = [3, 6, 12]
        .iter()
        .map(|&mb| {
            let mut m = MachineDescriptor::v100();
            m.l2_capacity_bytes = mb * MIB;
            m
        })
        .collect();
    let mut n = 0;
    for sweep in sweeps {
        for (c, g) in sweep.iter() {
            let t: Vec<f64> = machines.iter().map(|m| assemble(g, m).dram_total()).collect();
            if !(t[1] <= t[0] && t[2] <= t[1]) {
                return Err(format!("{c}: DRAM {t:?} at 3, 6, 12 MiB"));
            }
            n += 1;
        }
    }
    Ok(format!("{n} configurations non-increasing"))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    let (tag, detail, ok) = match out {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} [{id:>2}] {name}: {detail} ({secs:.1}s)");
    ok
}

fn main() -> ExitCode {
    let v100 = MachineDescriptor::v100();
    let t = Instant::now();
    let sweep128 = stencil_sweep_128(&v100);
    let shapes512 = stencil_shapes_512(&v100);
    println!("sweep geometries measured in {:.1}s", t.elapsed().as_secs_f64());

    let results = [
        run(1, "bank-conflict triptych", bank_triptych),
        run(2, "footprint figure", footprint_figure),
        run(3, "oracle equivalence", oracle_equivalence),
        run(4, "volume identities", || volume_identities(&sweep128, &v100)),
        run(5, "streaming LBM bound", lbm_streaming_bound),
        run(6, "stencil intensity", stencil_intensity),
        run(7, "qualitative volume ordering", || volume_ordering(&shapes512, &v100)),
        run(8, "sweep cardinality", || sweep_cardinality(&sweep128, &v100)),
        run(9, "gompertz round trip", || gompertz_round_trip(&sweep128)),
        run(10, "l2 capacity monotonicity", || monotonicity(&[&sweep128, &shapes512])),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
