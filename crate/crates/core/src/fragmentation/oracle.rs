//! Reference fragmentation score written directly from the definition, over a
//! plain boolean slice vector and a private copy of the A100 profile table.
//! It shares no code with [`super::frag_score`] and exists to cross-check it.

/// (width in memory slices, legal start indexes)
const A100_TABLE: [(usize, &[usize]); 6] =
    [(1, &[0, 1, 2, 3, 4, 5, 6]), (2, &[0, 2, 4, 6]), (2, &[0, 2, 4]), (4, &[0, 4]), (4, &[0]), (8, &[0])];

pub fn frag_score_oracle(occupied: [bool; 8]) -> u32 {
    let mut unused = 0usize;
    for slot in occupied {
        if !slot {
            unused += 1;
        }
    }
    let mut score = 0u32;
    for (width, indexes) in A100_TABLE {
        if width > unused {
            continue;
        }
        for &first in indexes {
            let mut allocated_in_span = 0usize;
            for &slot in &occupied[first..first + width] {
                if slot {
                    allocated_in_span += 1;
                }
            }
            if allocated_in_span > 0 {
                score += width as u32;
            }
        }
    }
    score
}

/// Score of the occupancy encoded by the low 8 bits of `vector`.
pub fn oracle_from_bits(vector: u8) -> u32 {
    let mut occupied = [false; 8];
    for (i, slot) in occupied.iter_mut().enumerate() {
        *slot = (vector >> i) & 1 == 1;
    }
    frag_score_oracle(occupied)
}
