//! Query execution and chart recommendation over [`TableFrame`](crate::TableFrame)s.

mod query;
mod recommend;

pub use query::{run_query, AggFn, Aggregate, Filter, FilterOp, QueryError, QuerySpec};
pub use recommend::{
    frame_stats, is_time_column, recommend_charts, recommend_from_stats, ChartRecommendation, ChartType, ColumnStats,
    Encoding, FrameStats, RecommendError, CATEGORICAL_MAX_DISTINCT, DISTINCT_SAMPLE_ROWS,
};
