use rand::RngCore;

use super::pdf::accumulate;
use super::{OccupancyGrid, PdfEstimator, TransmittanceEstimator, TransmittanceProfile};
use crate::field::DensityField;
use crate::geometry::Ray;

/// Occupancy grid first, coarse-density refinement second.
///
/// The grid restricts the domain to occupied spans; the coarse density then
/// shapes T inside those spans. The profile starts at the first occupied span
/// and ends at the last one, so rays that hit nothing carry no opacity.
#[derive(Debug, Clone)]
pub struct CombinedEstimator {
    pub grid: OccupancyGrid,
    pub pdf: PdfEstimator,
}

impl CombinedEstimator {
    pub fn new(grid: OccupancyGrid, pdf: PdfEstimator) -> Self {
        Self { grid, pdf }
    }
}

/// Splits `total_segments` over spans proportionally to length (largest
/// remainder), with at least one segment per span.
pub(crate) fn allocate_segments(spans: &[(f64, f64)], total_segments: usize) -> Vec<usize> {
    let total: f64 = spans.iter().map(|(a, b)| b - a).sum();
    let quotas: Vec<f64> = spans
        .iter()
        .map(|(a, b)| total_segments as f64 * (b - a) / total)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let assigned: usize = counts.iter().sum();
    if assigned < total_segments {
        let mut order: Vec<usize> = (0..spans.len()).collect();
        // stable: ties go to the earlier span
        order.sort_by(|&i, &j| {
            let ri = quotas[i] - quotas[i].floor();
            let rj = quotas[j] - quotas[j].floor();
            rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
        });
        for &i in order.iter().cycle().take(total_segments - assigned) {
            counts[i] += 1;
        }
    }
    counts
}

impl TransmittanceEstimator for CombinedEstimator {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        let spans = self.grid.traverse(ray);
        if spans.is_empty() {
            return TransmittanceProfile::trivial(ray.t_near(), ray.t_far());
        }
        let counts = allocate_segments(&spans, self.pdf.n_coarse());
        let mut bp = vec![spans[0].0];
        let mut tr = vec![1.0];
        let mut depth = 0.0;
        for (&(a, b), &segments) in spans.iter().zip(&counts) {
            if a > *bp.last().unwrap() {
                bp.push(a);
                tr.push(*tr.last().unwrap());
            }
            let mut points = Vec::with_capacity(segments + 1);
            points.push(a);
            for i in 1..segments {
                let t = a + (i as f64 / segments as f64) * (b - a);
                if t > *points.last().unwrap() {
                    points.push(t);
                }
            }
            if b > *points.last().unwrap() {
                points.push(b);
            }
            accumulate(&self.pdf, ray, &points, &mut depth, &mut bp, &mut tr);
        }
        TransmittanceProfile::new(bp, tr).expect("combined profile is valid by construction")
    }

    fn march_step(&self) -> Option<f64> {
        self.grid.march_step()
    }

    fn update(&mut self, field: &dyn DensityField, rng: &mut dyn RngCore) -> bool {
        self.grid.update_ema(field, rng);
        true
    }
}
