//! Holds the `acceptance` test target, which runs the end-to-end checks and
//! prints one PASS/FAIL line per criterion. Kept in its own package so it
//! runs after the unit and integration tests of the other crates.
