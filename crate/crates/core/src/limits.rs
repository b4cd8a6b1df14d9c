//! Size guards for trees and bi-trees.
//!
//! `CARLESON_MAX_NODES` overrides both the tree node limit and the bi-tree
//! rectangle limit.

/// Default maximum tree depth; the node limit is derived from it.
pub const DEFAULT_MAX_DEPTH: u32 = 20;

/// Default maximum number of bi-tree rectangles.
pub const DEFAULT_MAX_RECTS: u128 = 1 << 22;

pub const ENV_MAX_NODES: &str = "CARLESON_MAX_NODES";

fn env_override() -> Option<u128> {
    std::env::var(ENV_MAX_NODES).ok()?.trim().parse().ok()
}

pub fn tree_node_limit() -> u128 {
    env_override().unwrap_or((1u128 << (DEFAULT_MAX_DEPTH + 1)) - 1)
}

pub fn bitree_rect_limit() -> u128 {
    env_override().unwrap_or(DEFAULT_MAX_RECTS)
}
