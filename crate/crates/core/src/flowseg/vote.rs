use crate::error::{Error, Result};
use crate::flowseg::maps::{ClassMap, InstanceMap, ProbMap};

/// Per-pixel label: argmax over the cell-class channels `1..=C`, lower id
/// on ties.
pub fn pixel_argmax(probs: &ProbMap) -> Vec<i32> {
    let n = probs.height * probs.width;
    (0..n)
        .map(|i| {
            let mut best = 1;
            let mut best_p = probs.get(1, i);
            for c in 2..probs.channels {
                let p = probs.get(c, i);
                if p > best_p {
                    best = c;
                    best_p = p;
                }
            }
            best as i32
        })
        .collect()
}

/// Assign each instance the most frequent pixel label among its pixels.
///
/// Ties go to the class with the higher mean probability over the
/// instance, then to the lower class id. Returns the class map painted
/// uniformly per instance and the class of instances `1..=K` (index
/// `k-1`). Ids without pixels get class 0.
pub fn majority_vote(inst: &InstanceMap, probs: &ProbMap) -> Result<(ClassMap, Vec<i32>)> {
    if inst.height != probs.height || inst.width != probs.width {
        return Err(Error::InvalidInput(format!(
            "instance map is {}×{} but probability map is {}×{}",
            inst.height, inst.width, probs.height, probs.width
        )));
    }
    let k = inst.num_instances();
    let c = probs.n_classes();
    let labels = pixel_argmax(probs);
    let mut votes = vec![0u64; (k + 1) * (c + 1)];
    let mut prob_sums = vec![0f64; (k + 1) * (c + 1)];
    let mut areas = vec![0u64; k + 1];
    for (i, &l) in inst.labels.iter().enumerate() {
        if l <= 0 {
            continue;
        }
        let row = l as usize * (c + 1);
        votes[row + labels[i] as usize] += 1;
        for ch in 1..=c {
            prob_sums[row + ch] += probs.get(ch, i) as f64;
        }
        areas[l as usize] += 1;
    }
    let mut classes = vec![0i32; k];
    for id in 1..=k {
        if areas[id] == 0 {
            continue;
        }
        let row = id * (c + 1);
        let area = areas[id] as f64;
        let mut best = 1usize;
        for ch in 2..=c {
            let (v, bv) = (votes[row + ch], votes[row + best]);
            let (m, bm) = (prob_sums[row + ch] / area, prob_sums[row + best] / area);
            if v > bv || (v == bv && m > bm) {
                best = ch;
            }
        }
        classes[id - 1] = best as i32;
    }
    let painted = inst.labels.iter().map(|&l| if l > 0 { classes[l as usize - 1] } else { 0 }).collect();
    Ok((ClassMap::new(inst.height, inst.width, painted)?, classes))
}
