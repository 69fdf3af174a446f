//! Flow-field instance post-processing: gradient tracking toward flow
//! sinks, sink clustering, small-object removal, majority-vote typing and
//! contour extraction.

mod flows;
mod maps;
mod polygons;
mod vote;

pub use flows::{cluster_converged, flows_from_instances, follow_flows, segment, Positions, SegmentParams};
pub use maps::{ClassMap, FlowField, InstanceMap, ProbMap};
pub use polygons::{class_color, instances_to_polygons, polygons_to_geojson, InstancePolygon, Ring};
pub use vote::{majority_vote, pixel_argmax};
