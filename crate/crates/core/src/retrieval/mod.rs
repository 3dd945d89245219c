//! Query-by-example search: token distance tables, subsequence DTW at token and
//! frame level, score fusion, ranking and mean average precision.

mod dtw;
mod fixture;
mod kl;
mod rank;

pub use dtw::{frame_dtw, subsequence_dtw, token_dtw};
pub use fixture::{synthesize_std_fixture, StdFixture, StdFixtureSpec};
pub use kl::{gaussian_kl, matching_matrix, state_kl, token_distance_matrix, DistanceMatrix};
pub use rank::{
    average_precision, mean_average_precision, rank_documents, rankings_to_tsv, RankMode, RankedList, RelevanceTable,
    SearchItem, Stream,
};
