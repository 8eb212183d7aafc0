//! Periodic top-level grid with adaptive octree refinement, interaction-pair
//! enumeration and sorted-projection pair traversal.

pub mod active;
pub mod build;
pub mod interact;
pub mod sort;

pub use active::{drift_required, mark_active_cells, maximal_cells, ActiveSets};
pub use build::{Cell, Tree, TreeParams, EMPTY_BIN, NO_CELL};
pub use interact::{enumerate_interactions, Interaction, Reach};
pub use sort::{dir_vector, sort_keys, traverse_sorted, SortKey, N_DIRS};
