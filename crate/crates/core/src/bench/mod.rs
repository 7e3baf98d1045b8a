//! Synthetic benchmark: textured cuboid renders with known poses, cluttered
//! backgrounds, occluders and class-incremental task splits.

mod appearance;
mod dataset;
mod render;
mod split;

pub use appearance::{make_class_appearance, ClassAppearance, FaceTexture};
pub use dataset::{library_of, read_raster, write_raster, Dataset, DatasetConfig, RecordEntry, RASTER_MAGIC};
pub use render::{occlude, render_sample, GeneratedSample, OcclusionLevel};
pub use split::{
    build_task_sequence, generate_records, parse_split, random_pose, split_classes, AzimuthMode, SampleRecord,
    Split, TaskSequence, TaskSplit,
};
