#![allow(dead_code)]

use hiercdm::qmatrix::{validate_hierarchy, Hierarchy, Profile, ProfileSet, QMatrix};

pub fn q(rows: &[&[u8]]) -> QMatrix {
    QMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

pub fn h(k: usize, edges: &[(usize, usize)]) -> Hierarchy {
    validate_hierarchy(k, edges).unwrap()
}

pub fn profile(bits: &str) -> Profile {
    bits.parse().unwrap()
}

pub fn set(k: usize, bits: &[&str]) -> ProfileSet {
    ProfileSet::new(k, bits.iter().map(|b| profile(b)).collect()).unwrap()
}

pub fn rows(m: &[&[u8]]) -> Vec<Vec<u8>> {
    m.iter().map(|r| r.to_vec()).collect()
}

/// No single-attribute item for attribute 2.
pub fn q_no_unit_b() -> QMatrix {
    q(&[&[1, 0], &[1, 1], &[1, 0], &[1, 1], &[1, 1]])
}

/// Two identity blocks stacked on `q_reduced`.
pub fn q_two_blocks() -> QMatrix {
    q(&[&[1, 0], &[0, 1], &[1, 0], &[0, 1], &[1, 0], &[1, 1]])
}

pub fn q_reduced() -> QMatrix {
    q(&[&[1, 0], &[0, 1], &[1, 0], &[1, 1]])
}

pub fn q_three_attr() -> QMatrix {
    q(&[&[0, 1, 0], &[0, 0, 1], &[1, 1, 0], &[1, 1, 1]])
}

pub fn q_conditional() -> QMatrix {
    q(&[
        &[1, 0, 0],
        &[0, 1, 0],
        &[1, 0, 0],
        &[0, 1, 0],
        &[1, 0, 0],
        &[1, 1, 0],
        &[1, 0, 1],
        &[0, 1, 1],
        &[1, 1, 1],
    ])
}

pub fn q_linear_generic() -> QMatrix {
    q(&[
        &[1, 1, 0],
        &[0, 1, 0],
        &[0, 0, 1],
        &[1, 1, 0],
        &[0, 1, 0],
        &[0, 0, 1],
        &[1, 1, 0],
        &[1, 0, 1],
        &[1, 1, 1],
    ])
}

/// Linear 1→2→3.
pub fn linear3() -> Hierarchy {
    h(3, &[(1, 2), (2, 3)])
}
