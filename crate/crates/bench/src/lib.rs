//! Shared fixtures for the stage benchmarks.

use evvel_core::association::{bound_search_range, SearchGrid};
use evvel_core::ingest::EventStream;
use evvel_core::leading_edge::{extract_leading_edge, EdgeOptions, LeadingEdgeSet};
use evvel_core::simulator::{render_events, SimScene};
use evvel_core::RigConfig;

pub struct Fixture {
    pub scene: SimScene,
    pub streams: Vec<EventStream>,
    pub edges: Vec<LeadingEdgeSet>,
    pub grid: SearchGrid,
}

impl Fixture {
    pub fn rig(&self) -> &RigConfig {
        &self.scene.rig
    }
}

/// Renders the default scene and runs the stages up to the search grid.
pub fn default_fixture() -> Fixture {
    let scene = SimScene::default_scene();
    let streams: Vec<EventStream> = render_events(&scene).iter().map(|r| r.stream()).collect();
    let edges: Vec<LeadingEdgeSet> = streams
        .iter()
        .map(|s| {
            let origin = scene.rig.scatter_origin(s.cam).expect("scatter origin");
            extract_leading_edge(s, origin, &EdgeOptions::default()).expect("leading edge")
        })
        .collect();
    let grid = bound_search_range(&edges, &scene.trajectory, &scene.rig, 0.02).expect("search range");
    Fixture { scene, streams, edges, grid }
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_is_populated() {
        let f = super::default_fixture();
        assert_eq!(f.streams.len(), 2);
        assert!(f.edges.iter().all(|e| !e.is_empty()));
        assert!(!f.grid.is_empty());
    }
}
