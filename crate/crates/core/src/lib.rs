pub mod fields;
pub mod littlewood_paley;
pub mod elliptic;
pub mod dynamics;
pub mod diagnostics;
