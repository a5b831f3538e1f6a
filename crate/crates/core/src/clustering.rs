//! Caption embeddings and DBSCAN grouping of events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, Embedder};
use crate::segmentation::Event;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("label count {labels} does not match event count {events}")]
    LabelMismatch { labels: usize, events: usize },
    #[error("nothing to cluster: input is empty")]
    Empty,
    #[error("embedding failed at caption {index}: {source}")]
    Service {
        index: usize,
        #[source]
        source: ClientError,
    },
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
}

/// Unit-length caption vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEmbedding {
    values: Vec<f64>,
}

impl CaptionEmbedding {
    /// L2-normalizes `values`. A zero vector is kept as is.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    #[default]
    Singleton,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub noise_policy: NoisePolicy,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            eps: 0.35,
            min_pts: 2,
            noise_policy: NoisePolicy::Singleton,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.eps > 0.0) {
            return Err(ClusterError::InvalidConfig("eps must be > 0".into()));
        }
        if self.min_pts < 1 {
            return Err(ClusterError::InvalidConfig("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-point labels in `[0, cluster_count)`; `None` marks noise dropped
/// under [`NoisePolicy::Drop`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

/// Renumbers labels so ids appear in increasing order of first occurrence.
pub fn relabel_by_first_appearance(labels: &[Option<usize>]) -> (Vec<Option<usize>>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            l.map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
        })
        .collect();
    (out, map.len())
}

fn range_query(points: &[&[f64]], i: usize, eps: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, q)| euclidean(points[i], q) <= eps)
        .map(|(j, _)| j)
        .collect()
}

/// Classic DBSCAN over raw vectors. Neighborhoods are closed balls of radius
/// `eps` and include the point itself. Points are scanned in input order and
/// a border point joins the first cluster whose expansion reaches it.
pub fn dbscan_points(points: &[&[f64]], cfg: &ClusterConfig) -> ClusterAssignment {
    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;

    let n = points.len();
    let mut label = vec![UNVISITED; n];
    let mut next_cluster = 0;

    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        let neighbors = range_query(points, i, cfg.eps);
        if neighbors.len() < cfg.min_pts {
            label[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        label[i] = cluster;
        let mut queue = std::collections::VecDeque::from(neighbors);
        while let Some(q) = queue.pop_front() {
            if label[q] == NOISE {
                label[q] = cluster;
                continue;
            }
            if label[q] != UNVISITED {
                continue;
            }
            label[q] = cluster;
            let nq = range_query(points, q, cfg.eps);
            if nq.len() >= cfg.min_pts {
                queue.extend(nq);
            }
        }
    }

    let mut promoted = next_cluster;
    let raw: Vec<Option<usize>> = label
        .into_iter()
        .map(|l| {
            if l != NOISE {
                return Some(l);
            }
            match cfg.noise_policy {
                NoisePolicy::Singleton => {
                    promoted += 1;
                    Some(promoted - 1)
                }
                NoisePolicy::Drop => None,
            }
        })
        .collect();
    let (labels, cluster_count) = relabel_by_first_appearance(&raw);
    ClusterAssignment {
        labels,
        cluster_count,
    }
}

pub fn dbscan(points: &[CaptionEmbedding], cfg: &ClusterConfig) -> Result<ClusterAssignment, ClusterError> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(ClusterError::Empty);
    }
    let views: Vec<&[f64]> = points.iter().map(CaptionEmbedding::values).collect();
    Ok(dbscan_points(&views, cfg))
}

pub fn embed_captions<E: Embedder + ?Sized>(
    captions: &[String],
    client: &E,
) -> Result<Vec<CaptionEmbedding>, ClusterError> {
    if captions.is_empty() {
        return Err(ClusterError::Empty);
    }
    let vectors = client.embed(captions).map_err(|source| ClusterError::Service {
        index: source.index().unwrap_or(0),
        source,
    })?;
    Ok(vectors)
}

/// Events sharing one cluster label, sorted by start.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGroup {
    pub events: Vec<Event>,
}

impl EventGroup {
    pub fn first_start(&self) -> usize {
        self.events.first().map_or(usize::MAX, |e| e.start)
    }
}

pub fn group_events(events: &[Event], assignment: &ClusterAssignment) -> Result<Vec<EventGroup>, ClusterError> {
    if events.len() != assignment.labels.len() {
        return Err(ClusterError::LabelMismatch {
            labels: assignment.labels.len(),
            events: events.len(),
        });
    }
    let mut groups: Vec<Vec<Event>> = vec![Vec::new(); assignment.cluster_count];
    for (event, label) in events.iter().zip(&assignment.labels) {
        if let Some(l) = label {
            let slot = groups.get_mut(*l).ok_or(ClusterError::LabelMismatch {
                labels: assignment.labels.len(),
                events: events.len(),
            })?;
            slot.push(event.clone());
        }
    }
    let mut groups: Vec<EventGroup> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|mut events| {
            events.sort_by_key(|e| e.start);
            EventGroup { events }
        })
        .collect();
    groups.sort_by_key(EventGroup::first_start);
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::HashEmbedder;

    fn pts(raw: &[Vec<f64>]) -> Vec<&[f64]> {
        raw.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn single_point_is_one_cluster() {
        let raw = vec![vec![0.0, 1.0]];
        let cfg = ClusterConfig {
            min_pts: 1,
            ..Default::default()
        };
        let a = dbscan_points(&pts(&raw), &cfg);
        assert_eq!(a.labels, vec![Some(0)]);
        assert_eq!(a.cluster_count, 1);
    }

    #[test]
    fn two_distant_groups() {
        let mut raw = vec![vec![0.0, 0.0]; 5];
        raw.extend(vec![vec![10.0, 10.0]; 5]);
        let cfg = ClusterConfig {
            eps: 0.5,
            min_pts: 3,
            ..Default::default()
        };
        let a = dbscan_points(&pts(&raw), &cfg);
        assert_eq!(a.cluster_count, 2);
        assert_eq!(a.labels[..5], [Some(0); 5]);
        assert_eq!(a.labels[5..], [Some(1); 5]);
    }

    #[test]
    fn all_noise_promoted_or_dropped() {
        let raw = vec![vec![0.0], vec![5.0], vec![10.0]];
        let mut cfg = ClusterConfig {
            eps: 0.1,
            min_pts: 2,
            ..Default::default()
        };
        let a = dbscan_points(&pts(&raw), &cfg);
        assert_eq!(a.labels, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.cluster_count, 3);

        cfg.noise_policy = NoisePolicy::Drop;
        let a = dbscan_points(&pts(&raw), &cfg);
        assert_eq!(a.labels, vec![None, None, None]);
        assert_eq!(a.cluster_count, 0);
    }

    #[test]
    fn border_point_labels_follow_first_appearance() {
        // Point 0 is a border of the core group at 1..=3; point 4 is noise.
        let raw = vec![vec![0.0], vec![0.9], vec![1.0], vec![1.1], vec![9.0]];
        let cfg = ClusterConfig {
            eps: 0.95,
            min_pts: 3,
            ..Default::default()
        };
        let a = dbscan_points(&pts(&raw), &cfg);
        assert_eq!(a.labels, vec![Some(0), Some(0), Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(dbscan(&[], &ClusterConfig::default()), Err(ClusterError::Empty)));
    }

    #[test]
    fn embed_captions_via_mock() {
        let captions: Vec<String> = ["a red car", "a dog", "a red car"].iter().map(|s| s.to_string()).collect();
        let e = embed_captions(&captions, &HashEmbedder::default()).unwrap();
        assert_eq!(e.len(), 3);
        for v in &e {
            let n: f64 = v.values().iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(e[0], e[2]);
        assert!(matches!(embed_captions(&[], &HashEmbedder::default()), Err(ClusterError::Empty)));
    }

    fn ev(start: usize, end: usize) -> Event {
        Event::new(start, end)
    }

    #[test]
    fn grouping_follows_labels() {
        let events = vec![ev(1, 2), ev(3, 4), ev(5, 6)];
        let a = ClusterAssignment {
            labels: vec![Some(0), Some(0), Some(1)],
            cluster_count: 2,
        };
        let g = group_events(&events, &a).unwrap();
        assert_eq!(g[0].events, vec![ev(1, 2), ev(3, 4)]);
        assert_eq!(g[1].events, vec![ev(5, 6)]);
    }

    #[test]
    fn groups_ordered_by_earliest_member() {
        let events = vec![ev(1, 2), ev(3, 4), ev(5, 6)];
        let a = ClusterAssignment {
            labels: vec![Some(1), Some(0), Some(1)],
            cluster_count: 2,
        };
        let g = group_events(&events, &a).unwrap();
        assert_eq!(g[0].events, vec![ev(1, 2), ev(5, 6)]);
        assert_eq!(g[1].events, vec![ev(3, 4)]);
    }

    #[test]
    fn grouping_rejects_length_mismatch() {
        let a = ClusterAssignment {
            labels: vec![Some(0)],
            cluster_count: 1,
        };
        assert!(matches!(
            group_events(&[ev(1, 1), ev(2, 2)], &a),
            Err(ClusterError::LabelMismatch { labels: 1, events: 2 })
        ));
    }
}
