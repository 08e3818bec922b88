use serde::{Deserialize, Serialize};

use super::{Descriptor, Match};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchOptions {
    pub max_distance: u32,
    pub ratio_threshold: f64,
    pub cross_check: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            max_distance: 64,
            ratio_threshold: 0.8,
            cross_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    index: usize,
    d1: u32,
    ratio: f64,
}

/// Nearest neighbour of every descriptor of `a` within `b`; ties go to the
/// lower index. A missing second neighbour counts as distance 256.
fn nearest(a: &[Descriptor], b: &[Descriptor]) -> Vec<Option<Best>> {
    a.iter()
        .map(|da| {
            let mut best: Option<(usize, u32)> = None;
            let mut d2 = 256u32;
            for (j, db) in b.iter().enumerate() {
                let d = da.hamming(db);
                match best {
                    Some((_, d1)) if d >= d1 => d2 = d2.min(d),
                    Some((_, d1)) => {
                        d2 = d1;
                        best = Some((j, d));
                    }
                    None => best = Some((j, d)),
                }
            }
            best.map(|(index, d1)| Best {
                index,
                d1,
                ratio: if d2 == 0 { 1.0 } else { d1 as f64 / d2 as f64 },
            })
        })
        .collect()
}

/// Brute-force Hamming matching with Lowe's ratio test and an absolute
/// distance cap. With `cross_check` only mutual best matches that pass the
/// ratio test in both directions survive, which makes the result symmetric
/// in its arguments. Without it, each reference descriptor is used at most
/// once (lowest distance wins). Output is ordered by query index.
pub fn match_descriptors(query: &[Descriptor], reference: &[Descriptor], opts: &MatchOptions) -> Vec<Match> {
    let ab = nearest(query, reference);
    let pass = |b: &Best| b.d1 <= opts.max_distance && b.ratio <= opts.ratio_threshold;
    if opts.cross_check {
        let ba = nearest(reference, query);
        ab.iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let b = (*b)?;
                let back = ba[b.index]?;
                (back.index == i && pass(&b) && pass(&back)).then(|| Match {
                    query: i,
                    reference: b.index,
                    distance: b.d1,
                    ratio: b.ratio.max(back.ratio),
                })
            })
            .collect()
    } else {
        let mut owner: Vec<Option<usize>> = vec![None; reference.len()];
        for (i, b) in ab.iter().enumerate() {
            let Some(b) = b.filter(pass) else { continue };
            match owner[b.index] {
                Some(o) if ab[o].unwrap().d1 <= b.d1 => {}
                _ => owner[b.index] = Some(i),
            }
        }
        let mut out: Vec<Match> = owner
            .iter()
            .enumerate()
            .filter_map(|(j, o)| {
                let i = (*o)?;
                let b = ab[i].unwrap();
                Some(Match {
                    query: i,
                    reference: j,
                    distance: b.d1,
                    ratio: b.ratio,
                })
            })
            .collect();
        out.sort_by_key(|m| m.query);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};

    fn random_descs(seed: u64, n: usize) -> Vec<Descriptor> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Descriptor([rng.random(), rng.random(), rng.random(), rng.random()])).collect()
    }

    #[test]
    fn recovers_permutation() {
        let a = random_descs(7, 60);
        let mut perm: Vec<usize> = (0..60).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(8));
        let b: Vec<_> = perm.iter().map(|&i| a[i]).collect();
        let m = match_descriptors(&a, &b, &MatchOptions::default());
        assert_eq!(m.len(), 60);
        for x in &m {
            assert_eq!(perm[x.reference], x.query);
            assert_eq!(x.distance, 0);
        }
    }

    #[test]
    fn ratio_test_rejects_ambiguous() {
        let base = Descriptor([0, 0, 0, 0]);
        let near = Descriptor([0b1111, 0, 0, 0]);
        let near2 = Descriptor([0b1111_0000, 0, 0, 0]);
        // two equally good references for one query
        let m = match_descriptors(&[base], &[near, near2], &MatchOptions { cross_check: false, ..Default::default() });
        assert!(m.is_empty());
        let m = match_descriptors(&[base], &[near], &MatchOptions::default());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].distance, 4);
        assert!((m[0].ratio - 4.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn distance_cap() {
        let a = Descriptor([0, 0, 0, 0]);
        let b = Descriptor([u64::MAX, 1, 0, 0]);
        assert!(match_descriptors(&[a], &[b], &MatchOptions { ratio_threshold: 1.0, ..Default::default() }).is_empty());
    }

    #[test]
    fn without_cross_check_references_used_once() {
        let r = Descriptor([0, 0, 0, 0]);
        let far = Descriptor([u64::MAX, u64::MAX, u64::MAX, u64::MAX]);
        let q1 = Descriptor([1, 0, 0, 0]);
        let q2 = Descriptor([3, 0, 0, 0]);
        let m = match_descriptors(&[q2, q1], &[r, far], &MatchOptions { cross_check: false, ..Default::default() });
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].query, 1);
    }

    proptest! {
        #[test]
        fn cross_check_is_symmetric(sa in 0u64..1000, sb in 0u64..1000, na in 1usize..40, nb in 1usize..40, shared in 0usize..20) {
            let mut a = random_descs(sa, na);
            let mut b = random_descs(sb + 10_000, nb);
            // plant noisy copies so that some matches exist
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sa ^ sb);
            for k in 0..shared.min(na).min(nb) {
                let mut d = a[k];
                for _ in 0..rng.random_range(0..20) {
                    let bit = rng.random_range(0..256);
                    d.0[bit / 64] ^= 1 << (bit % 64);
                }
                b[(k * 7) % nb] = d;
            }
            a.rotate_left(na / 3);
            let opts = MatchOptions::default();
            let ab = match_descriptors(&a, &b, &opts);
            let mut ba: Vec<Match> = match_descriptors(&b, &a, &opts)
                .into_iter()
                .map(|m| Match { query: m.reference, reference: m.query, ..m })
                .collect();
            ba.sort_by_key(|m| m.query);
            prop_assert_eq!(ab, ba);
        }
    }
}
