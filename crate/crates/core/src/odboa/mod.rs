//! Appearance bags, orientation-driven slot selection and multi-shot matching.

mod bag;
mod matching;
mod selection;

pub use bag::{build_bag, pool_selection, AppearanceBag, BagSlot, Occupancy};
pub use matching::{
    match_bags, score_matrix, selection_pairs, ChannelModel, Comparison, MatchContext, MatchingModel, MetricChoice,
    MultiShotMethod, PoolLevel, WAVG_WEIGHTS,
};
pub use selection::{adjacent_lookup, adjacent_slot, select_pairs, select_slots, Selection};
