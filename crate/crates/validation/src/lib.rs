//! Holds the `acceptance` test target, which exercises the core library and
//! the command-line front end together. Run it with
//! `cargo test -p synpanel-validation --test acceptance`.
