use std::collections::{BTreeMap, BTreeSet};

use super::{CollaborativeGroup, FieldFootprint, FootprintResult, KindFilter};
use crate::kernel::{AccessKind, KernelDescriptor};
use crate::{Error, Result};

/// Reference implementation of [`super::grid_iteration`]: evaluates every
/// expression tree per thread and inserts into an ordered set.
pub fn naive_footprint_oracle(
    kernel: &KernelDescriptor,
    group: &CollaborativeGroup,
    granularity: u64,
    filter: KindFilter,
) -> Result<FootprintResult> {
    if granularity == 0 || granularity > i64::MAX as u64 {
        return Err(Error::Invalid(format!("granularity {granularity} out of range")));
    }
    group.check(&kernel.launch)?;
    let bases = kernel.base_map();
    let g = granularity as i64;
    let threads = group.threads(&kernel.launch);

    let mut sets: BTreeMap<(usize, AccessKind), (BTreeSet<i64>, u64)> = BTreeMap::new();
    for a in &kernel.accesses {
        if !filter.accepts(a.kind) {
            continue;
        }
        let fi = kernel
            .field_index(&a.field)
            .ok_or_else(|| Error::Invalid(format!("unknown field {}", a.field)))?;
        let es = kernel.fields[fi].element_size as u64;
        let entry = sets.entry((fi, a.kind)).or_default();
        for t in &threads {
            let addr = a.expr.eval_scalar(t, &kernel.launch, &bases)?;
            entry.0.insert(addr.div_euclid(g));
            entry.1 += es * a.multiplicity as u64;
        }
    }
    Ok(FootprintResult {
        granularity,
        entries: sets
            .into_iter()
            .map(|((fi, kind), (lines, total))| FieldFootprint {
                field: kernel.fields[fi].name.clone(),
                kind,
                unique_lines: lines.len() as u64,
                unique_bytes: lines.len() as u64 * granularity,
                total_access_bytes: total,
            })
            .collect(),
    })
}
