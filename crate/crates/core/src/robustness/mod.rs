//! Natural corruptions, L∞ PGD attacks and the evaluation loops over them.

mod corruption;
mod eval;
mod pgd;

pub use corruption::{corrupt, corrupt_unclamped, CorruptionKind, CorruptionSpec, MAX_SEVERITY};
pub use eval::{
    accuracy, eval_under_attack, eval_under_corruption, predict_logits, write_attack_csv,
    write_corruption_csv, AttackRow, CorruptionRow, DEFAULT_EPSILONS,
};
pub use pgd::{pgd_attack, AttackSpec};
