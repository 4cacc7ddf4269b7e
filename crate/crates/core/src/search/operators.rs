//! Variation and selection operators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genome::{repair, ArchGenome, SpaceRanges};
use crate::metrics::{
    constraint_dominates, crowding_distance, fast_non_dominated_sort, Constrained,
};

/// Per-operator firing probabilities inside the mutation gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorRates {
    pub deletion: f64,
    pub duplication: f64,
    pub rotation: f64,
    pub perturbation: f64,
}

impl Default for OperatorRates {
    fn default() -> Self {
        Self {
            deletion: 0.1,
            duplication: 0.1,
            rotation: 0.05,
            perturbation: 0.4,
        }
    }
}

impl OperatorRates {
    pub fn all(p: f64) -> Self {
        Self {
            deletion: p,
            duplication: p,
            rotation: p,
            perturbation: p,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.deletion,
            self.duplication,
            self.rotation,
            self.perturbation,
        ]
        .iter()
        .all(|p| (0.0..=1.0).contains(p))
    }
}

/// Which operators fired on a child.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub crossover: bool,
    pub deletion: bool,
    pub duplication: bool,
    pub rotation: bool,
    pub perturbation: bool,
    /// Drawn uniformly from the space instead of bred.
    pub sampled: bool,
}

impl Lineage {
    /// Compact tag such as `x+del+pert`, or `copy` when nothing fired.
    pub fn tag(&self) -> String {
        let parts: Vec<&str> = [
            (self.crossover, "x"),
            (self.deletion, "del"),
            (self.duplication, "dup"),
            (self.rotation, "rot"),
            (self.perturbation, "pert"),
            (self.sampled, "sample"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
        if parts.is_empty() {
            "copy".to_owned()
        } else {
            parts.join("+")
        }
    }
}

/// Single-point crossover at a cut drawn from `1..L`, then repair. With a
/// single slot the child is a copy of `p1`.
pub fn crossover<R: Rng + ?Sized>(
    p1: &ArchGenome,
    p2: &ArchGenome,
    ranges: &SpaceRanges,
    rng: &mut R,
) -> ArchGenome {
    let n = p1.layers.len().min(p2.layers.len());
    if n < 2 {
        return repair(p1, ranges);
    }
    let cut = rng.random_range(1..n);
    crossover_at(p1, p2, cut, ranges)
}

/// Layers `[0, cut)` from `p1` and `[cut, L)` from `p2`; globals from `p1`.
pub fn crossover_at(
    p1: &ArchGenome,
    p2: &ArchGenome,
    cut: usize,
    ranges: &SpaceRanges,
) -> ArchGenome {
    let mut child = p1.clone();
    for (dst, src) in child.layers.iter_mut().zip(&p2.layers).skip(cut) {
        *dst = *src;
    }
    repair(&child, ranges)
}

/// Flips one slot's mask; a flip that would leave no active layer is undone.
pub fn delete_op<R: Rng + ?Sized>(g: &mut ArchGenome, rng: &mut R) {
    let i = rng.random_range(0..g.layers.len());
    g.layers[i].mask = !g.layers[i].mask;
    if g.active_count() == 0 {
        g.layers[i].mask = true;
    }
}

/// Copies slot `i` onto a later slot `j`.
pub fn duplicate_op<R: Rng + ?Sized>(g: &mut ArchGenome, rng: &mut R) {
    let n = g.layers.len();
    if n < 2 {
        return;
    }
    let i = rng.random_range(0..n - 1);
    let j = rng.random_range(i + 1..n);
    g.layers[j] = g.layers[i];
}

/// Rotates the active layers left by `shift` positions; pruned slots stay put.
pub fn rotate_active(g: &mut ArchGenome, shift: usize) {
    let slots: Vec<usize> = g.active_layers().map(|(i, _)| i).collect();
    if slots.is_empty() {
        return;
    }
    let genes: Vec<_> = slots.iter().map(|&i| g.layers[i]).collect();
    for (k, &slot) in slots.iter().enumerate() {
        g.layers[slot] = genes[(k + shift) % genes.len()];
    }
}

/// Reverses the order of the active layers; pruned slots stay put.
pub fn reflect_active(g: &mut ArchGenome) {
    let slots: Vec<usize> = g.active_layers().map(|(i, _)| i).collect();
    let genes: Vec<_> = slots.iter().map(|&i| g.layers[i]).collect();
    for (slot, gene) in slots.iter().zip(genes.into_iter().rev()) {
        g.layers[*slot] = gene;
    }
}

pub fn rotate_or_reflect_op<R: Rng + ?Sized>(g: &mut ArchGenome, rng: &mut R) {
    let n = g.active_count();
    if n < 2 {
        return;
    }
    if rng.random_bool(0.5) {
        rotate_active(g, rng.random_range(1..n));
    } else {
        reflect_active(g);
    }
}

/// Moves one field of one active layer a single grid step, or toggles its
/// attention gate.
pub fn perturb_op<R: Rng + ?Sized>(g: &mut ArchGenome, ranges: &SpaceRanges, rng: &mut R) {
    let slots: Vec<usize> = g.active_layers().map(|(i, _)| i).collect();
    if slots.is_empty() {
        return;
    }
    let l = &mut g.layers[slots[rng.random_range(0..slots.len())]];
    let field = rng.random_range(0..6u32);
    let delta = if rng.random_bool(0.5) { 1 } else { -1 };
    match field {
        0 => l.n_h = ranges.n_h.shift(l.n_h, delta),
        1 => l.n_kv = ranges.n_kv.shift(l.n_kv, delta),
        2 => l.d_qk = ranges.d_qk.shift(l.d_qk, delta),
        3 => l.d_v = ranges.d_v.shift(l.d_v, delta),
        4 => l.d_mlp = ranges.d_mlp.shift(l.d_mlp, delta),
        _ => l.attn = !l.attn,
    }
}

/// Applies each operator independently with its own rate, in the order
/// deletion, duplication, rotation/reflection, perturbation, then repairs.
pub fn mutate<R: Rng + ?Sized>(
    g: &ArchGenome,
    ranges: &SpaceRanges,
    rates: &OperatorRates,
    rng: &mut R,
) -> (ArchGenome, Lineage) {
    let mut out = g.clone();
    let mut lin = Lineage::default();
    if rng.random_bool(rates.deletion) {
        delete_op(&mut out, rng);
        lin.deletion = true;
    }
    if rng.random_bool(rates.duplication) {
        duplicate_op(&mut out, rng);
        lin.duplication = true;
    }
    if rng.random_bool(rates.rotation) {
        rotate_or_reflect_op(&mut out, rng);
        lin.rotation = true;
    }
    if rng.random_bool(rates.perturbation) {
        perturb_op(&mut out, ranges, rng);
        lin.perturbation = true;
    }
    (repair(&out, ranges), lin)
}

/// Ranking data for a population: front index and crowding per member.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub fronts: Vec<Vec<usize>>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

pub fn rank_population(points: &[Constrained<'_>]) -> Ranking {
    let fronts = fast_non_dominated_sort(points);
    let mut rank = vec![0; points.len()];
    let mut crowding = vec![0.0; points.len()];
    for (r, front) in fronts.iter().enumerate() {
        let objs: Vec<&[f64]> = front.iter().map(|&i| points[i].objectives).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&objs)) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    Ranking {
        fronts,
        rank,
        crowding,
    }
}

/// Binary tournament: `size` winners, each the constraint-dominance winner of
/// two uniform draws, ties going to the larger crowding distance and then to
/// the first draw.
pub fn tournament_select<R: Rng + ?Sized>(
    points: &[Constrained<'_>],
    size: usize,
    rng: &mut R,
) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let ranking = rank_population(points);
    (0..size)
        .map(|_| {
            let a = rng.random_range(0..points.len());
            let b = rng.random_range(0..points.len());
            tournament_winner(points, &ranking.crowding, a, b)
        })
        .collect()
}

pub fn tournament_winner(
    points: &[Constrained<'_>],
    crowding: &[f64],
    a: usize,
    b: usize,
) -> usize {
    if constraint_dominates(&points[a], &points[b]) {
        a
    } else if constraint_dominates(&points[b], &points[a]) {
        b
    } else if crowding[b] > crowding[a] {
        b
    } else {
        a
    }
}

/// NSGA-II survival: whole fronts in order, the last admitted front cut by
/// descending crowding distance (stable on index). Returns `min(n, len)`
/// indices.
pub fn nsga_survival(points: &[Constrained<'_>], n: usize) -> Vec<usize> {
    let fronts = fast_non_dominated_sort(points);
    let mut out = Vec::with_capacity(n);
    for front in fronts {
        if out.len() + front.len() <= n {
            out.extend(front);
            continue;
        }
        let objs: Vec<&[f64]> = front.iter().map(|&i| points[i].objectives).collect();
        let crowd = crowding_distance(&objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]));
        out.extend(order.into_iter().take(n - out.len()).map(|k| front[k]));
        break;
    }
    out
}

/// Exploit/explore split of a refinement batch. `front` and `rest` index
/// into `mu`/`sigma`; returns `(exploit, explore)`. Ties keep index order.
pub fn acquisition_select(
    front: &[usize],
    rest: &[usize],
    mu: &[f64],
    sigma: &[f64],
    b: usize,
) -> (Vec<usize>, Vec<usize>) {
    let n_exploit = (b / 2).min(front.len());
    let mut exploit = front.to_vec();
    exploit.sort_by(|&x, &y| mu[x].total_cmp(&mu[y]));
    exploit.truncate(n_exploit);

    let mut explore = rest.to_vec();
    explore.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));
    explore.truncate(b - n_exploit);
    (exploit, explore)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{is_valid, random_genome, AttentionVariant, GlobalConfig, LayerGene};
    use crate::util;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(v: &[f64]) -> Constrained<'_> {
        Constrained {
            objectives: v,
            feasible: true,
            violation: 0.0,
        }
    }

    #[test]
    fn crossover_boundaries() {
        let r = SpaceRanges::default();
        let a = random_genome(&GlobalConfig::default(), &r, 1);
        let b = random_genome(&GlobalConfig::default(), &r, 2);
        let c = crossover_at(&a, &b, 1, &r);
        assert_eq!(c.layers[0], a.layers[0]);
        assert_eq!(&c.layers[1..], &b.layers[1..]);
        let mut rng = util::rng(0);
        for _ in 0..20 {
            assert_eq!(crossover(&a, &a, &r, &mut rng), a);
            assert!(is_valid(&crossover(&a, &b, &r, &mut rng), &r));
        }
    }

    #[test]
    fn deleting_the_only_layer_keeps_it() {
        let mut g = ArchGenome::from_active(
            GlobalConfig {
                max_layers: 1,
                ..Default::default()
            },
            &[LayerGene::active(4, 2, 64, 64, 512)],
        );
        let mut rng = util::rng(3);
        delete_op(&mut g, &mut rng);
        assert_eq!(g.active_count(), 1);
    }

    #[test]
    fn reflection_is_an_involution_and_rotation_cycles() {
        let r = SpaceRanges::default();
        let g = random_genome(&GlobalConfig::default(), &r, 9);
        let mut h = g.clone();
        reflect_active(&mut h);
        reflect_active(&mut h);
        assert_eq!(h, g);
        let n = g.active_count();
        let mut h = g.clone();
        rotate_active(&mut h, 1);
        for (a, b) in g.layers.iter().zip(&h.layers) {
            assert_eq!(a.mask, b.mask);
        }
        rotate_active(&mut h, n - 1);
        assert_eq!(h, g);
    }

    #[test]
    fn perturbation_clamps_at_the_grid_top() {
        let r = SpaceRanges::default();
        let l = LayerGene::active(4, 2, 512, 512, 4096);
        let g0 = ArchGenome::from_active(
            GlobalConfig {
                max_layers: 1,
                ..Default::default()
            },
            &[l],
        );
        let mut rng = util::rng(0);
        for _ in 0..200 {
            let mut g = g0.clone();
            perturb_op(&mut g, &r, &mut rng);
            let m = g.layers[0];
            assert!(m.d_qk <= 512 && m.d_v <= 512 && m.d_mlp <= 4096);
        }
    }

    #[test]
    fn dominant_point_wins_every_tournament() {
        let pts = [
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![2.0, 1.0],
            vec![3.0, 3.0],
        ];
        let cs: Vec<_> = pts.iter().map(|p| pt(p)).collect();
        let crowd = rank_population(&cs).crowding;
        for b in 0..4 {
            assert_eq!(tournament_winner(&cs, &crowd, 0, b), 0);
            assert_eq!(tournament_winner(&cs, &crowd, b, 0), 0);
        }
        let mut infeasible = cs.clone();
        infeasible[1].feasible = false;
        infeasible[1].violation = 0.1;
        assert_eq!(tournament_winner(&infeasible, &crowd, 1, 3), 3);
        assert_eq!(tournament_select(&cs, 7, &mut util::rng(1)).len(), 7);
    }

    #[test]
    fn survival_on_one_front_keeps_extremes() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 5.0 - i as f64]).collect();
        let cs: Vec<_> = pts.iter().map(|p| pt(p)).collect();
        let kept = nsga_survival(&cs, 2);
        assert_eq!(kept, vec![0, 5]);
        assert_eq!(nsga_survival(&cs, 10).len(), 6);
    }

    #[test]
    fn infeasible_points_fill_only_leftover_slots() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let mut cs: Vec<_> = pts.iter().map(|p| pt(p)).collect();
        cs[0].feasible = false;
        cs[0].violation = 1.0;
        assert!(!nsga_survival(&cs, 5).contains(&0));
        assert!(nsga_survival(&cs, 6).contains(&0));
    }

    #[test]
    fn acquisition_quota_rules() {
        let mu: Vec<f64> = (0..24).map(|i| (i % 7) as f64).collect();
        let sigma: Vec<f64> = (0..24).map(|i| (i * 5 % 11) as f64).collect();
        let split =
            |k: usize| -> (Vec<usize>, Vec<usize>) { ((0..k).collect(), (k..24).collect()) };
        let (front, rest) = split(10);
        let (ex, ey) = acquisition_select(&front, &rest, &mu, &sigma, 8);
        assert_eq!((ex.len(), ey.len()), (4, 4));
        assert!(ey.iter().all(|i| !front.contains(i)));
        assert_eq!(ex, vec![0, 7, 1, 8]);
        let (front, rest) = split(2);
        let (ex, ey) = acquisition_select(&front, &rest, &mu, &sigma, 8);
        assert_eq!((ex.len(), ey.len()), (2, 6));
        let zero = vec![0.0; 24];
        let (front, rest) = split(1);
        let (_, ey) = acquisition_select(&front, &rest, &mu, &zero, 4);
        assert_eq!(ey, vec![1, 2, 3]);
        let (ex, ey) = acquisition_select(&[0, 1], &[2], &mu, &sigma, 8);
        assert_eq!((ex.len(), ey.len()), (2, 1));
    }

    proptest! {
        #[test]
        fn mutation_output_is_valid(seed in any::<u64>(), gqa in any::<bool>()) {
            let v = if gqa { AttentionVariant::Gqa } else { AttentionVariant::Iha };
            let r = SpaceRanges::default().with_variant(v);
            let g = random_genome(&GlobalConfig::default(), &r, seed);
            let mut rng = util::rng(seed ^ 1);
            let (m, _) = mutate(&g, &r, &OperatorRates::all(1.0), &mut rng);
            prop_assert!(is_valid(&m, &r));
        }

        #[test]
        fn survival_keeps_the_first_front_when_it_fits(seed in any::<u64>()) {
            let mut rng = util::rng(seed);
            let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(0..5) as f64).collect()).collect();
            let cs: Vec<_> = pts.iter().map(|p| pt(p)).collect();
            let first = fast_non_dominated_sort(&cs)[0].clone();
            let n = first.len().max(10);
            let kept = nsga_survival(&cs, n);
            prop_assert_eq!(kept.len(), n);
            prop_assert!(first.iter().all(|i| kept.contains(i)));
        }
    }
}
