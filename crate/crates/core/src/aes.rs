//! Cycle-accurate AES-128 encryption engine models.
//!
//! Two register-transfer-level architectures are modeled. The
//! high-performance engine computes one full round per clock cycle and
//! finishes an encryption in 11 cycles including the initial key addition.
//! The low-power engine serializes each round through a single S-box and
//! per-column mixing, taking 207 cycles per encryption. Both run the key
//! schedule on the fly and report, per cycle, how many register bits toggled;
//! those counts drive the supply-current synthesis in [`crate::leakage`].
//!
//! State bytes use the standard column-major layout: byte `i` sits at row
//! `i % 4`, column `i / 4`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type AesKey = [u8; 16];
pub type Plaintext = [u8; 16];
pub type Ciphertext = [u8; 16];

/// Encryption latency of the round-per-cycle engine, in clock cycles.
pub const HP_CYCLES: usize = 11;
/// Encryption latency of the byte-serial engine, in clock cycles:
/// 1 initial key addition, nine rounds of 16 + 4 + 1 cycles, and a final
/// round of 16 + 1.
pub const LP_CYCLES: usize = 207;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AesArchitecture {
    HighPerformance,
    LowPower,
}

impl AesArchitecture {
    pub fn cycles_per_encryption(self) -> usize {
        match self {
            AesArchitecture::HighPerformance => HP_CYCLES,
            AesArchitecture::LowPower => LP_CYCLES,
        }
    }
}

/// Switching activity of one clock cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityRecord {
    pub cycle: u32,
    /// Bits toggled in the state datapath registers this cycle.
    pub state_transitions: u32,
    /// Bits toggled in the key schedule registers this cycle.
    pub key_transitions: u32,
    /// Extra combinational activity in register-bit equivalents.
    pub comb_weight: f64,
}

impl ActivityRecord {
    /// Total drawn-charge weight of this cycle.
    pub fn weight(&self) -> f64 {
        self.state_transitions as f64 + self.key_transitions as f64 + self.comb_weight
    }
}

/// Per-cycle switching activity of one encryption.
#[derive(Clone, Debug)]
pub struct ActivityTrace {
    pub architecture: AesArchitecture,
    pub records: Vec<ActivityRecord>,
}

impl ActivityTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_transitions(&self) -> u64 {
        self.records
            .iter()
            .map(|r| (r.state_transitions + r.key_transitions) as u64)
            .sum()
    }

    /// Sum of per-cycle weights, i.e. total charge in units of one
    /// register-bit toggle.
    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight()).sum()
    }
}

pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

pub const INV_SBOX: [u8; 256] = [
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

pub fn sbox(b: u8) -> u8 {
    SBOX[b as usize]
}

pub fn inv_sbox(b: u8) -> u8 {
    INV_SBOX[b as usize]
}

fn xtime(b: u8) -> u8 {
    let w = (b as u16) << 1;
    ((w & 0xff) ^ if w & 0x100 != 0 { 0x1b } else { 0 }) as u8
}

fn hd128(a: &[u8; 16], b: &[u8; 16]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

fn shift_rows(s: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for col in 0..4 {
        for row in 0..4 {
            out[row + 4 * col] = s[row + 4 * ((col + row) % 4)];
        }
    }
    out
}

fn mix_single_column(col: &[u8; 4]) -> [u8; 4] {
    let [a, b, c, d] = *col;
    [
        xtime(a) ^ (xtime(b) ^ b) ^ c ^ d,
        a ^ xtime(b) ^ (xtime(c) ^ c) ^ d,
        a ^ b ^ xtime(c) ^ (xtime(d) ^ d),
        (xtime(a) ^ a) ^ b ^ c ^ xtime(d),
    ]
}

fn mix_columns(s: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for col in 0..4 {
        let c: [u8; 4] = s[4 * col..4 * col + 4].try_into().unwrap();
        out[4 * col..4 * col + 4].copy_from_slice(&mix_single_column(&c));
    }
    out
}

fn sub_bytes(s: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for (o, b) in out.iter_mut().zip(s) {
        *o = sbox(*b);
    }
    out
}

fn xor16(a: &[u8; 16], b: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for i in 0..16 {
        out[i] = a[i] ^ b[i];
    }
    out
}

/// All 11 round keys of the AES-128 key schedule.
pub fn round_keys(key: &AesKey) -> [[u8; 16]; 11] {
    let mut rks = [[0u8; 16]; 11];
    rks[0] = *key;
    for r in 1..11 {
        let prev = rks[r - 1];
        let mut rk = [0u8; 16];
        // Word 0 uses the rotated and substituted last word of the previous key.
        let t = [
            sbox(prev[13]) ^ RCON[r - 1],
            sbox(prev[14]),
            sbox(prev[15]),
            sbox(prev[12]),
        ];
        for i in 0..4 {
            rk[i] = prev[i] ^ t[i];
        }
        for w in 1..4 {
            for i in 0..4 {
                rk[4 * w + i] = prev[4 * w + i] ^ rk[4 * (w - 1) + i];
            }
        }
        rks[r] = rk;
    }
    rks
}

/// Round-10 key, the quantity recovered by the last-round distance model.
pub fn round10_key(key: &AesKey) -> [u8; 16] {
    round_keys(key)[10]
}

/// Full-state snapshots after the initial key addition and after each round.
/// `states[0]` is `pt ^ k0`, `states[10]` the ciphertext.
fn round_states(key: &AesKey, pt: &Plaintext) -> [[u8; 16]; 11] {
    let rks = round_keys(key);
    let mut states = [[0u8; 16]; 11];
    states[0] = xor16(pt, &rks[0]);
    for r in 1..10 {
        states[r] = xor16(&mix_columns(&shift_rows(&sub_bytes(&states[r - 1]))), &rks[r]);
    }
    states[10] = xor16(&shift_rows(&sub_bytes(&states[9])), &rks[10]);
    states
}

/// Plain AES-128 encryption without activity accounting.
pub fn encrypt(key: &AesKey, pt: &Plaintext) -> Ciphertext {
    round_states(key, pt)[10]
}

/// Round-per-cycle engine. Cycle 0 loads `pt ^ k0` into the cleared state
/// register; cycles 1..=10 each latch one round result. The key register
/// advances through the schedule in lockstep.
pub fn encrypt_hp(key: &AesKey, pt: &Plaintext) -> (Ciphertext, ActivityTrace) {
    let rks = round_keys(key);
    let states = round_states(key, pt);
    let zero = [0u8; 16];
    let mut records = Vec::with_capacity(HP_CYCLES);
    records.push(ActivityRecord {
        cycle: 0,
        state_transitions: hd128(&zero, &states[0]),
        key_transitions: hd128(&zero, &rks[0]),
        comb_weight: 0.0,
    });
    for r in 1..11 {
        records.push(ActivityRecord {
            cycle: r as u32,
            state_transitions: hd128(&states[r - 1], &states[r]),
            key_transitions: hd128(&rks[r - 1], &rks[r]),
            comb_weight: 0.0,
        });
    }
    (
        states[10],
        ActivityTrace {
            architecture: AesArchitecture::HighPerformance,
            records,
        },
    )
}

/// Byte-serial engine built around a single S-box.
///
/// Schedule per round: 16 substitution cycles rewrite the state bytes in
/// place, four cycles write the row-shifted and column-mixed result one
/// column at a time from operand latches, and one cycle applies the round
/// key across the full 128-bit width. The final round skips column mixing
/// and folds the row shift into the key-addition cycle.
///
/// The S-box output stage returns to zero between evaluations, so every
/// substitution cycle additionally toggles the Hamming weight of the S-box
/// output on top of the state byte update. The key register holds the
/// previous round key while a round computes and steps at the key-addition
/// cycle.
pub fn encrypt_lp(key: &AesKey, pt: &Plaintext) -> (Ciphertext, ActivityTrace) {
    let rks = round_keys(key);
    let mut records = Vec::with_capacity(LP_CYCLES);
    let mut cycle = 0u32;
    let mut push = |records: &mut Vec<ActivityRecord>, state_tr: u32, key_tr: u32| {
        records.push(ActivityRecord {
            cycle,
            state_transitions: state_tr,
            key_transitions: key_tr,
            comb_weight: 0.0,
        });
        cycle += 1;
    };

    let mut s = xor16(pt, &rks[0]);
    push(&mut records, hd128(&[0u8; 16], &s), hd128(&[0u8; 16], &rks[0]));

    for r in 1..10 {
        for b in 0..16 {
            let old = s[b];
            let new = sbox(old);
            s[b] = new;
            push(
                &mut records,
                (old ^ new).count_ones() + new.count_ones(),
                0,
            );
        }
        let mixed = mix_columns(&shift_rows(&s));
        for col in 0..4 {
            let range = 4 * col..4 * col + 4;
            let old: [u8; 4] = s[range.clone()].try_into().unwrap();
            let new: [u8; 4] = mixed[range.clone()].try_into().unwrap();
            s[range].copy_from_slice(&new);
            let hd: u32 = old
                .iter()
                .zip(&new)
                .map(|(x, y)| (x ^ y).count_ones())
                .sum();
            push(&mut records, hd, 0);
        }
        let next = xor16(&s, &rks[r]);
        push(
            &mut records,
            hd128(&s, &next),
            hd128(&rks[r - 1], &rks[r]),
        );
        s = next;
    }

    for b in 0..16 {
        let old = s[b];
        let new = sbox(old);
        s[b] = new;
        push(
            &mut records,
            (old ^ new).count_ones() + new.count_ones(),
            0,
        );
    }
    let ct = xor16(&shift_rows(&s), &rks[10]);
    push(&mut records, hd128(&s, &ct), hd128(&rks[9], &rks[10]));

    debug_assert_eq!(records.len(), LP_CYCLES);
    (
        ct,
        ActivityTrace {
            architecture: AesArchitecture::LowPower,
            records,
        },
    )
}

/// Where the state byte at `idx` lands after the row shift.
fn shift_rows_dest(idx: usize) -> usize {
    let row = idx % 4;
    let col = idx / 4;
    row + 4 * ((col + 4 - row) % 4)
}

/// Round-10 key byte recovered when modeling the register cell `byte_idx`
/// with [`model_hd_last_round`].
pub fn hd_model_key_byte(byte_idx: usize) -> Result<usize> {
    if byte_idx >= 16 {
        return Err(Error::ByteIndex(byte_idx));
    }
    Ok(shift_rows_dest(byte_idx))
}

/// Hamming distance the register cell `byte_idx` travels in the final round,
/// predicted from the ciphertext under a guess of one round-10 key byte.
///
/// Cell `q` holds `S9[q]` before the last round and `ct[q]` after it. The
/// substituted value of `S9[q]` lands at position `dst(q)` of the
/// ciphertext, so `S9[q] = inv_sbox(ct[dst(q)] ^ k10[dst(q)])` and the guess
/// targets key byte `dst(q)` (see [`hd_model_key_byte`]). Row-0 cells map to
/// themselves.
pub fn model_hd_last_round(ct: &Ciphertext, key_guess: u8, byte_idx: usize) -> Result<u32> {
    if byte_idx >= 16 {
        return Err(Error::ByteIndex(byte_idx));
    }
    let dst = shift_rows_dest(byte_idx);
    let s9 = inv_sbox(ct[dst] ^ key_guess);
    Ok((s9 ^ ct[byte_idx]).count_ones())
}

/// Hamming weight of the first-round S-box output for one plaintext byte
/// under a guess of the corresponding initial key byte.
pub fn model_hw_first_sbox(pt_byte: u8, key_guess: u8) -> u32 {
    sbox(pt_byte ^ key_guess).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Word-oriented AES written directly from the standard, used as an
    /// independent cross-check of the engine models. Multiplication walks
    /// the field generically instead of using xtime chains.
    mod reference {
        pub fn gmul(mut a: u8, mut b: u8) -> u8 {
            let mut p = 0u8;
            for _ in 0..8 {
                if b & 1 != 0 {
                    p ^= a;
                }
                let hi = a & 0x80 != 0;
                a <<= 1;
                if hi {
                    a ^= 0x1b;
                }
                b >>= 1;
            }
            p
        }

        fn sub_word(w: [u8; 4]) -> [u8; 4] {
            w.map(|b| super::SBOX[b as usize])
        }

        pub fn expand(key: &[u8; 16]) -> Vec<[u8; 4]> {
            let mut w: Vec<[u8; 4]> = (0..4)
                .map(|i| key[4 * i..4 * i + 4].try_into().unwrap())
                .collect();
            let rcon = [0x01u8, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];
            for i in 4..44 {
                let mut t = w[i - 1];
                if i % 4 == 0 {
                    t = sub_word([t[1], t[2], t[3], t[0]]);
                    t[0] ^= rcon[i / 4 - 1];
                }
                let prev = w[i - 4];
                w.push([prev[0] ^ t[0], prev[1] ^ t[1], prev[2] ^ t[2], prev[3] ^ t[3]]);
            }
            w
        }

        /// Returns the state after the initial key addition and after every
        /// round, plus each round key, all as flat 16-byte arrays.
        pub fn encrypt_logged(key: &[u8; 16], pt: &[u8; 16]) -> (Vec<[u8; 16]>, Vec<[u8; 16]>) {
            let w = expand(key);
            let rk = |r: usize| -> [u8; 16] {
                let mut out = [0u8; 16];
                for c in 0..4 {
                    out[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
                }
                out
            };
            let keys: Vec<[u8; 16]> = (0..11).map(rk).collect();

            let mut state = [[0u8; 4]; 4]; // state[row][col]
            for (i, b) in pt.iter().enumerate() {
                state[i % 4][i / 4] = *b;
            }
            let add_key = |state: &mut [[u8; 4]; 4], rk: &[u8; 16]| {
                for col in 0..4 {
                    for row in 0..4 {
                        state[row][col] ^= rk[row + 4 * col];
                    }
                }
            };
            let flat = |state: &[[u8; 4]; 4]| -> [u8; 16] {
                let mut out = [0u8; 16];
                for col in 0..4 {
                    for row in 0..4 {
                        out[row + 4 * col] = state[row][col];
                    }
                }
                out
            };

            let mut log = Vec::new();
            add_key(&mut state, &keys[0]);
            log.push(flat(&state));
            for round in 1..=10 {
                for row in state.iter_mut() {
                    for b in row.iter_mut() {
                        *b = super::SBOX[*b as usize];
                    }
                }
                for (row, shift) in (0..4).map(|r| (r, r)) {
                    let mut tmp = [0u8; 4];
                    for col in 0..4 {
                        tmp[col] = state[row][(col + shift) % 4];
                    }
                    state[row] = tmp;
                }
                if round < 10 {
                    for col in 0..4 {
                        let a: Vec<u8> = (0..4).map(|r| state[r][col]).collect();
                        for row in 0..4 {
                            state[row][col] = gmul(a[row], 2)
                                ^ gmul(a[(row + 1) % 4], 3)
                                ^ a[(row + 2) % 4]
                                ^ a[(row + 3) % 4];
                        }
                    }
                }
                add_key(&mut state, &keys[round]);
                log.push(flat(&state));
            }
            (log, keys)
        }
    }

    const FIPS_KEY: [u8; 16] = [
        0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e,
        0x0f,
    ];
    const FIPS_PT: [u8; 16] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee,
        0xff,
    ];
    const FIPS_CT: [u8; 16] = [
        0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30, 0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5,
        0x5a,
    ];

    fn rng_bytes(seed: u64) -> impl FnMut() -> [u8; 16] {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        move || {
            let mut b = [0u8; 16];
            rng.fill_bytes(&mut b);
            b
        }
    }

    #[test]
    fn published_vector() {
        assert_eq!(encrypt(&FIPS_KEY, &FIPS_PT), FIPS_CT);
        assert_eq!(encrypt_hp(&FIPS_KEY, &FIPS_PT).0, FIPS_CT);
        assert_eq!(encrypt_lp(&FIPS_KEY, &FIPS_PT).0, FIPS_CT);
    }

    #[test]
    fn sbox_matches_field_algebra() {
        // Rebuild the S-box from the field inverse and affine map.
        for x in 0u16..256 {
            let x = x as u8;
            let inv = if x == 0 {
                0
            } else {
                (1u16..256)
                    .map(|y| y as u8)
                    .find(|&y| reference::gmul(x, y) == 1)
                    .unwrap()
            };
            let mut r = 0u8;
            for i in 0..8 {
                let bit = ((inv >> i)
                    ^ (inv >> ((i + 4) % 8))
                    ^ (inv >> ((i + 5) % 8))
                    ^ (inv >> ((i + 6) % 8))
                    ^ (inv >> ((i + 7) % 8))
                    ^ (0x63 >> i))
                    & 1;
                r |= bit << i;
            }
            assert_eq!(SBOX[x as usize], r, "sbox[{x:#04x}]");
            assert_eq!(INV_SBOX[SBOX[x as usize] as usize], x);
        }
    }

    #[test]
    fn engines_agree_with_reference() {
        let mut next = rng_bytes(11);
        for _ in 0..200 {
            let key = next();
            let pt = next();
            let (log, _) = reference::encrypt_logged(&key, &pt);
            let want = log[10];
            assert_eq!(encrypt_hp(&key, &pt).0, want);
            assert_eq!(encrypt_lp(&key, &pt).0, want);
        }
    }

    #[test]
    fn hp_activity_is_state_register_distance() {
        let mut next = rng_bytes(23);
        for _ in 0..20 {
            let key = next();
            let pt = next();
            let (ct, act) = encrypt_hp(&key, &pt);
            let (log, keys) = reference::encrypt_logged(&key, &pt);
            assert_eq!(ct, log[10]);
            assert_eq!(act.records.len(), HP_CYCLES);
            assert_eq!(
                act.records[0].state_transitions,
                hd128(&[0u8; 16], &log[0])
            );
            assert_eq!(act.records[0].key_transitions, hd128(&[0u8; 16], &keys[0]));
            for r in 1..11 {
                assert_eq!(
                    act.records[r].state_transitions,
                    hd128(&log[r - 1], &log[r]),
                    "round {r}"
                );
                assert_eq!(act.records[r].key_transitions, hd128(&keys[r - 1], &keys[r]));
                assert!(act.records[r].state_transitions <= 128);
            }
        }
    }

    #[test]
    fn lp_schedule_shape() {
        let mut next = rng_bytes(37);
        for _ in 0..20 {
            let key = next();
            let pt = next();
            let (ct, act) = encrypt_lp(&key, &pt);
            assert_eq!(ct, encrypt(&key, &pt));
            assert_eq!(act.records.len(), LP_CYCLES);
            for (i, rec) in act.records.iter().enumerate() {
                assert_eq!(rec.cycle as usize, i);
                let within_round = if i == 0 {
                    // initial key addition, full width
                    assert!(rec.state_transitions <= 128);
                    continue;
                } else if i < 1 + 9 * 21 {
                    (i - 1) % 21
                } else {
                    i - (1 + 9 * 21)
                };
                if within_round < 16 {
                    // byte substitution: state byte plus return-to-zero stage
                    assert!(rec.state_transitions <= 16, "cycle {i}");
                    assert_eq!(rec.key_transitions, 0);
                } else if within_round < 20 && i < 1 + 9 * 21 {
                    // one column rewrite
                    assert!(rec.state_transitions <= 32, "cycle {i}");
                    assert_eq!(rec.key_transitions, 0);
                } else {
                    // key addition across the full width
                    assert!(rec.state_transitions <= 128, "cycle {i}");
                }
            }
        }
    }

    #[test]
    fn key_register_activity_is_constant_per_key() {
        let mut next = rng_bytes(41);
        let key = next();
        let a = encrypt_hp(&key, &next()).1;
        let b = encrypt_hp(&key, &next()).1;
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.key_transitions, rb.key_transitions);
        }
    }

    #[test]
    fn hw_model_examples() {
        // sbox(0) = 0x63 has four set bits
        assert_eq!(model_hw_first_sbox(0x00, 0x00), 4);
        for (pt, k) in [(0x12u8, 0x34u8), (0xff, 0x00), (0xab, 0xcd)] {
            assert_eq!(model_hw_first_sbox(pt, k), sbox(pt ^ k).count_ones());
        }
    }

    #[test]
    fn hd_model_matches_logged_rounds() {
        let mut next = rng_bytes(53);
        for _ in 0..20 {
            let key = next();
            let pt = next();
            let (log, keys) = reference::encrypt_logged(&key, &pt);
            let ct = log[10];
            let k10 = keys[10];
            let mut total = 0u32;
            for q in 0..16 {
                let target = hd_model_key_byte(q).unwrap();
                let predicted = model_hd_last_round(&ct, k10[target], q).unwrap();
                let actual = (log[9][q] ^ log[10][q]).count_ones();
                assert_eq!(predicted, actual, "cell {q}");
                total += predicted;
            }
            assert_eq!(total, hd128(&log[9], &log[10]));
        }
    }

    #[test]
    fn hd_model_mean_over_uniform_bytes() {
        // Cell 1 reads ciphertext bytes 1 and 13; enumerate both.
        let q = 1;
        let dst = hd_model_key_byte(q).unwrap();
        assert_eq!(dst, 13);
        for guess in [0x00u8, 0x5a, 0xff] {
            let mut sum = 0u64;
            let mut ct = [0u8; 16];
            for a in 0..256u32 {
                for b in 0..256u32 {
                    ct[dst] = a as u8;
                    ct[q] = b as u8;
                    sum += u64::from(model_hd_last_round(&ct, guess, q).unwrap());
                }
            }
            assert_eq!(sum, 4 * 256 * 256, "guess {guess:#04x}");
        }
    }

    #[test]
    fn byte_index_is_checked() {
        assert!(matches!(
            model_hd_last_round(&[0u8; 16], 0, 16),
            Err(Error::ByteIndex(16))
        ));
        assert!(hd_model_key_byte(16).is_err());
    }

    proptest! {
        #[test]
        fn engines_agree(key in prop::array::uniform16(any::<u8>()),
                         pt in prop::array::uniform16(any::<u8>())) {
            let (ct_hp, act_hp) = encrypt_hp(&key, &pt);
            let (ct_lp, act_lp) = encrypt_lp(&key, &pt);
            prop_assert_eq!(ct_hp, ct_lp);
            prop_assert_eq!(act_hp.records.len(), HP_CYCLES);
            prop_assert_eq!(act_lp.records.len(), LP_CYCLES);
        }

        #[test]
        fn sbox_round_trips(b: u8) {
            prop_assert_eq!(inv_sbox(sbox(b)), b);
        }
    }
}
