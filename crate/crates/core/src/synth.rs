//! Seeded generator of synthetic benign and malicious-pattern snapshots.
//!
//! Malicious samples carry high-scoring strings referenced from their CFG,
//! suspicious imports, NOP sleds, a fan-out dispatcher region and an
//! uninitialized section. Benign samples have plain strings, ordinary
//! imports and chain-heavy control flow. Both share a noisy common core so
//! the classes are separable but not identical in every feature.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::snapshot::{
    BasicBlock, DisassemblySnapshot, EntryFunction, FunctionRecord, ImportedApi, Instruction,
    NodeId, Section, StringEntry,
};

const TEXT_BASE: u64 = 0x0040_1000;
const BLOCK_STRIDE: u64 = 0x40;
const PLT_BASE: u64 = 0x0060_0000;
const HELPER_BASE: u64 = 0x0070_0000;
const HELPER_STRIDE: u64 = 0x100;

const COMMON_OPS: [&str; 10] = [
    "mov", "push", "pop", "add", "sub", "cmp", "test", "lea", "and", "or",
];
const SUSPICIOUS_OPS: [&str; 5] = ["xor", "rol", "ror", "shl", "not"];

const BENIGN_APIS: [&str; 10] = [
    "GetModuleHandleA",
    "ReadFile",
    "CloseHandle",
    "GetLastError",
    "HeapAlloc",
    "HeapFree",
    "GetCommandLineA",
    "GetStartupInfoA",
    "ExitProcess",
    "GetSystemTimeAsFileTime",
];
const MALICIOUS_APIS: [&str; 8] = [
    "VirtualAllocEx",
    "WriteProcessMemory",
    "CreateRemoteThread",
    "OpenProcess",
    "RegSetValueExA",
    "InternetOpenUrlA",
    "URLDownloadToFileA",
    "ShellExecuteA",
];

const BENIGN_STRINGS: [&str; 10] = [
    "Copyright (c) Example Corp",
    "%d items processed",
    "settings",
    "Press any key",
    "Invalid argument",
    "usage: tool [options]",
    "Out of memory",
    "config loaded",
    "Done",
    "version 2.1",
];
const MALICIOUS_STRINGS: [&str; 10] = [
    "cmd.exe",
    "SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run",
    "http://update.example.net/gate.php",
    "CONNECT %s:%i HTTP/1.0",
    "svch0st.exe",
    "185.12.44.7",
    "WriteProcessMemory",
    "https://198.51.100.23/panel",
    "SYSTEM\\CurrentControlSet\\Services",
    "payload.dll",
];

struct Builder {
    rng: ChaCha8Rng,
    blocks: Vec<Vec<Instruction>>,
    edges: BTreeSet<(usize, usize)>,
    imports: Vec<ImportedApi>,
    helpers: Vec<FunctionRecord>,
}

impl Builder {
    fn block_addr(i: usize) -> u64 {
        TEXT_BASE + i as u64 * BLOCK_STRIDE
    }

    fn body(&mut self, len: usize, malicious: bool) -> Vec<String> {
        (0..len)
            .map(|_| {
                let suspicious = malicious && self.rng.gen_bool(0.35);
                let pool: &[&str] = if suspicious {
                    &SUSPICIOUS_OPS
                } else {
                    &COMMON_OPS
                };
                pool.choose(&mut self.rng)
                    .expect("non-empty pool")
                    .to_string()
            })
            .collect()
    }

    /// Lays mnemonics out at consecutive 4-byte addresses of block `i`; a
    /// `Some(target)` entry becomes a call.
    fn place(i: usize, ops: Vec<(String, Option<u64>)>) -> Vec<Instruction> {
        assert!(ops.len() as u64 * 4 <= BLOCK_STRIDE, "block overflow");
        ops.into_iter()
            .enumerate()
            .map(|(j, (m, target))| {
                let addr = Self::block_addr(i) + 4 * j as u64;
                match target {
                    Some(t) => Instruction::call(addr, t),
                    None => Instruction::new(addr, m),
                }
            })
            .collect()
    }
}

/// Generates one validated snapshot.
pub fn synth_snapshot(binary_id: &str, malicious: bool, seed: u64) -> DisassemblySnapshot {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed ^ if malicious { 0x9e37_79b9_7f4a_7c15 } else { 0 }),
        blocks: Vec::new(),
        edges: BTreeSet::new(),
        imports: Vec::new(),
        helpers: Vec::new(),
    };

    let mut apis: Vec<&str> = BENIGN_APIS
        .choose_multiple(&mut b.rng, 5)
        .copied()
        .collect();
    if malicious {
        apis.extend(MALICIOUS_APIS.choose_multiple(&mut b.rng, 4).copied());
    } else if b.rng.gen_bool(0.15) {
        apis.push(
            MALICIOUS_APIS
                .choose(&mut b.rng)
                .copied()
                .expect("non-empty"),
        );
    }
    b.imports = apis
        .iter()
        .enumerate()
        .map(|(k, name)| ImportedApi {
            name: (*name).to_string(),
            plt_addr: PLT_BASE + 8 * k as u64,
        })
        .collect();

    // helpers calling one API each
    let n_helpers = b.rng.gen_range(2..=4);
    for h in 0..n_helpers {
        let entry_addr = HELPER_BASE + h as u64 * HELPER_STRIDE;
        let api = b.imports[b.rng.gen_range(0..b.imports.len())].plt_addr;
        b.helpers.push(FunctionRecord {
            name: format!("fcn.{entry_addr:08x}"),
            entry_addr,
            size: Some(0x80),
            call_sites: vec![(entry_addr + 0x10, api)],
        });
    }

    let n = b.rng.gen_range(14..=30);
    let dispatcher = if malicious {
        Some(b.rng.gen_range(2..n / 2))
    } else {
        None
    };
    for i in 0..n {
        let len = b.rng.gen_range(2..=6);
        let mut ops: Vec<(String, Option<u64>)> = b
            .body(len, malicious)
            .into_iter()
            .map(|m| (m, None))
            .collect();
        if b.rng.gen_bool(0.3) {
            let t = if b.rng.gen_bool(0.5) {
                b.imports[b.rng.gen_range(0..b.imports.len())].plt_addr
            } else {
                b.helpers[b.rng.gen_range(0..b.helpers.len())].entry_addr
            };
            ops.insert(b.rng.gen_range(0..ops.len()), ("call".into(), Some(t)));
        }
        if malicious && b.rng.gen_bool(0.3) {
            let sled = b.rng.gen_range(2..=6);
            for _ in 0..sled {
                ops.insert(0, ("nop".into(), None));
            }
        }
        ops.truncate((BLOCK_STRIDE / 4) as usize - 1);
        let last = if i + 1 == n { "ret" } else { "jmp" };
        ops.push((last.into(), None));
        b.blocks.push(Builder::place(i, ops));
    }

    for i in 0..n - 1 {
        b.edges.insert((i, i + 1));
        if b.rng.gen_bool(if malicious { 0.3 } else { 0.15 }) {
            let j = b.rng.gen_range(i + 1..n);
            b.edges.insert((i, j));
        }
        if b.rng.gen_bool(0.1) {
            let j = b.rng.gen_range(0..=i);
            b.edges.insert((i, j));
        }
    }
    if let Some(d) = dispatcher {
        let fan = b.rng.gen_range(4..=7);
        for _ in 0..fan {
            let j = b.rng.gen_range(d + 1..n);
            b.edges.insert((d, j));
        }
        for _ in 0..3 {
            let p = b.rng.gen_range(0..d);
            b.edges.insert((p, d));
        }
    }

    let mut strings = Vec::new();
    let pool: &[&str] = if malicious {
        &MALICIOUS_STRINGS
    } else {
        &BENIGN_STRINGS
    };
    let n_strings = if malicious {
        b.rng.gen_range(4..=8)
    } else {
        b.rng.gen_range(0..=5)
    };
    for text in pool.choose_multiple(&mut b.rng, n_strings) {
        let mut refs = Vec::new();
        if b.rng.gen_bool(0.75) {
            let i = dispatcher
                .filter(|_| b.rng.gen_bool(0.5))
                .unwrap_or_else(|| b.rng.gen_range(0..n));
            refs.push(b.blocks[i][0].address);
        } else {
            let h = &b.helpers[b.rng.gen_range(0..b.helpers.len())];
            refs.push(h.entry_addr + 0x20);
        }
        strings.push(StringEntry {
            text: (*text).to_string(),
            ref_addrs: refs,
        });
    }

    let mut sections = vec![
        Section {
            name: ".text".into(),
            virtual_size: 0x4000 + b.rng.gen_range(0..0x800),
            physical_size: 0x4000,
        },
        Section {
            name: ".rdata".into(),
            virtual_size: 0x1000,
            physical_size: 0x1000,
        },
    ];
    if (malicious && b.rng.gen_bool(0.8)) || (!malicious && b.rng.gen_bool(0.1)) {
        sections.push(Section {
            name: ".upx0".into(),
            virtual_size: 0x20000,
            physical_size: if b.rng.gen_bool(0.5) { 0 } else { 0x2000 },
        });
    }

    let entry_calls: Vec<(u64, u64)> = b
        .blocks
        .iter()
        .flatten()
        .filter_map(|ins| ins.call_target.map(|t| (ins.address, t)))
        .collect();
    let mut functions = vec![FunctionRecord {
        name: "entry0".into(),
        entry_addr: TEXT_BASE,
        size: Some(n as u64 * BLOCK_STRIDE),
        call_sites: entry_calls,
    }];
    functions.append(&mut b.helpers);

    let blocks = b
        .blocks
        .into_iter()
        .enumerate()
        .map(|(i, instructions)| BasicBlock {
            id: NodeId(i),
            start_addr: Builder::block_addr(i),
            instructions,
        })
        .collect();
    DisassemblySnapshot::new(
        binary_id,
        sections,
        b.imports,
        strings,
        functions,
        EntryFunction {
            name: "entry0".into(),
            addr: TEXT_BASE,
        },
        blocks,
        b.edges
            .into_iter()
            .map(|(f, t)| (NodeId(f), NodeId(t)))
            .collect(),
    )
    .expect("generator emits valid snapshots")
}

/// `n_benign` benign then `n_malicious` malicious snapshots with labels
/// 0 and 1, ids `benign_0000`, `malware_0000`, ...
pub fn synth_corpus(
    n_benign: usize,
    n_malicious: usize,
    seed: u64,
) -> Vec<(DisassemblySnapshot, u8)> {
    let benign = (0..n_benign).map(|i| {
        let s = synth_snapshot(
            &format!("benign_{i:04}"),
            false,
            seed.wrapping_add(i as u64),
        );
        (s, 0)
    });
    let malicious = (0..n_malicious).map(|i| {
        let s = synth_snapshot(
            &format!("malware_{i:04}"),
            true,
            seed.wrapping_add(i as u64),
        );
        (s, 1)
    });
    benign.chain(malicious).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::parse_snapshot;

    #[test]
    fn snapshots_are_valid_and_reproducible() {
        for (i, mal) in [(0u64, false), (1, true), (2, false), (3, true)] {
            let s = synth_snapshot("x", mal, i);
            let back = parse_snapshot(s.to_json().as_bytes()).unwrap();
            assert_eq!(back, s);
            assert_eq!(synth_snapshot("x", mal, i), s);
        }
    }

    #[test]
    fn corpus_labels() {
        let c = synth_corpus(3, 2, 11);
        let labels: Vec<u8> = c.iter().map(|(_, l)| *l).collect();
        assert_eq!(labels, vec![0, 0, 0, 1, 1]);
        assert_eq!(c[3].0.binary_id, "malware_0000");
    }
}
