//! Holds the `acceptance` test target. Run it with
//! `cargo test -p vclab-suite --test acceptance`.
