//! Compact deterministic workspace maps.
//!
//! The orchestrator and every specialist navigate the workspace through a
//! rendered map instead of raw directory listings. The map is a pure
//! function of the tree snapshot: same snapshot, same bytes. When the full
//! listing would exceed the size cap, whole directories are elided bottom-up
//! into `(+N files ...)` summary lines, chosen in a fixed order so the
//! result stays deterministic. Region headings are never elided and every
//! file is accounted for either by name or inside an elision count.

use crate::bus::regions::RegionConfig;
use crate::bus::TreeSnapshot;
use crate::path::BusPath;
use std::collections::{BTreeMap, BTreeSet};

/// Rendering options.
#[derive(Debug, Clone, Copy)]
pub struct MapOptions {
    /// Maximum rendered size in bytes. The cap is honored unless even the
    /// fully collapsed map (one line per region) is larger, which the
    /// default cap is far too generous to allow.
    pub cap_bytes: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { cap_bytes: 8 * 1024 }
    }
}

#[derive(Debug, Clone)]
enum Entry {
    File {
        path: BusPath,
        size: u64,
        rev: u64,
    },
    Elided {
        dir: BusPath,
        files: usize,
        max_rev: u64,
    },
    EmptyDir {
        path: BusPath,
    },
}

impl Entry {
    fn sort_key(&self) -> &str {
        match self {
            Entry::File { path, .. } => path.as_str(),
            Entry::Elided { dir, .. } => dir.as_str(),
            Entry::EmptyDir { path } => path.as_str(),
        }
    }

    fn render(&self) -> String {
        match self {
            Entry::File { path, size, rev } => {
                format!("- {path} ({}, r{rev})", human_size(*size))
            }
            Entry::Elided { dir, files, max_rev } => {
                format!("- {dir}/ (+{files} files, up to r{max_rev})")
            }
            Entry::EmptyDir { path } => format!("- {path}/ (empty dir)"),
        }
    }
}

/// Render the workspace map for a tree snapshot.
pub fn render_map(snapshot: &TreeSnapshot, regions: &RegionConfig, opts: MapOptions) -> String {
    let mut entries = initial_entries(snapshot);
    loop {
        let rendered = render(snapshot, regions, &entries);
        if rendered.len() <= opts.cap_bytes {
            return rendered;
        }
        if !elide_one(&mut entries) {
            return rendered;
        }
    }
}

fn initial_entries(snapshot: &TreeSnapshot) -> Vec<Entry> {
    let mut covered: BTreeSet<BusPath> = BTreeSet::new();
    for (path, _) in &snapshot.files {
        let mut cur = path.parent();
        while let Some(d) = cur {
            cur = d.parent();
            covered.insert(d);
        }
    }
    for d in &snapshot.dirs {
        let mut cur = d.parent();
        while let Some(a) = cur {
            cur = a.parent();
            covered.insert(a);
        }
    }

    let mut entries: Vec<Entry> = snapshot
        .files
        .iter()
        .map(|(path, meta)| Entry::File {
            path: path.clone(),
            size: meta.size,
            rev: meta.last_revision,
        })
        .collect();
    for dir in &snapshot.dirs {
        let has_children = covered.contains(dir)
            || snapshot.dirs.iter().any(|d| d != dir && d.starts_with_dir(dir));
        if !has_children {
            entries.push(Entry::EmptyDir { path: dir.clone() });
        }
    }
    entries.sort_by(|a, b| a.sort_key().cmp(b.sort_key()));
    entries
}

/// Collapse the single highest-priority directory into one summary line.
/// Priority: deepest first, then lexicographically last, over directories
/// that currently own at least two visible entries. Returns false when no
/// further collapse is possible.
fn elide_one(entries: &mut Vec<Entry>) -> bool {
    let mut counts: BTreeMap<BusPath, usize> = BTreeMap::new();
    for entry in entries.iter() {
        let path = match entry {
            Entry::File { path, .. } => path.clone(),
            Entry::Elided { dir, .. } => dir.clone(),
            Entry::EmptyDir { path } => path.clone(),
        };
        let mut cur = path.parent();
        while let Some(d) = cur {
            cur = d.parent();
            *counts.entry(d).or_insert(0) += 1;
        }
    }
    let target = counts
        .into_iter()
        .filter(|(_, n)| *n >= 2)
        .max_by(|(a, _), (b, _)| {
            a.depth()
                .cmp(&b.depth())
                .then_with(|| a.as_str().cmp(b.as_str()))
        })
        .map(|(d, _)| d);
    let Some(dir) = target else {
        return false;
    };

    let mut files = 0usize;
    let mut max_rev = 0u64;
    entries.retain(|entry| {
        let (path, f, r) = match entry {
            Entry::File { path, rev, .. } => (path, 1, *rev),
            Entry::Elided { dir, files, max_rev } => (dir, *files, *max_rev),
            Entry::EmptyDir { path } => (path, 0, 0),
        };
        if path != &dir && path.starts_with_dir(&dir) {
            files += f;
            max_rev = max_rev.max(r);
            false
        } else {
            true
        }
    });
    entries.push(Entry::Elided { dir, files, max_rev });
    entries.sort_by(|a, b| a.sort_key().cmp(b.sort_key()));
    true
}

fn render(snapshot: &TreeSnapshot, regions: &RegionConfig, entries: &[Entry]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# workspace map (revision {}, {} files)\n",
        snapshot.revision,
        snapshot.files.len()
    ));

    let prefixes = regions.prefixes();
    let mut grouped: BTreeMap<usize, Vec<&Entry>> = BTreeMap::new();
    let mut outside: Vec<&Entry> = Vec::new();
    for entry in entries {
        let path = match entry {
            Entry::File { path, .. } => path,
            Entry::Elided { dir, .. } => dir,
            Entry::EmptyDir { path } => path,
        };
        match prefixes.iter().position(|pfx| path.starts_with_dir(pfx)) {
            Some(idx) => grouped.entry(idx).or_default().push(entry),
            None => outside.push(entry),
        }
    }

    for (idx, prefix) in prefixes.iter().enumerate() {
        let purpose = regions.purpose_of(prefix).unwrap_or("");
        out.push_str(&format!("\n## {prefix}/ :: {purpose}\n"));
        match grouped.get(&idx) {
            Some(list) if !list.is_empty() => {
                let only_self_dir = list.len() == 1
                    && matches!(list[0], Entry::EmptyDir { path } if path == prefix);
                if only_self_dir {
                    out.push_str("- (empty)\n");
                } else {
                    for entry in list {
                        if matches!(entry, Entry::EmptyDir { path } if path == prefix) {
                            continue;
                        }
                        out.push_str(&entry.render());
                        out.push('\n');
                    }
                }
            }
            _ => out.push_str("- (empty)\n"),
        }
    }

    if !outside.is_empty() {
        out.push_str("\n## (outside regions)\n");
        for entry in outside {
            out.push_str(&entry.render());
            out.push('\n');
        }
    }
    out
}

fn human_size(n: u64) -> String {
    if n < 1024 {
        format!("{n} B")
    } else if n < 1024 * 1024 {
        format!("{:.1} KiB", n as f64 / 1024.0)
    } else {
        format!("{:.1} MiB", n as f64 / (1024.0 * 1024.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::FileMeta;
    use proptest::prelude::*;

    /// Oracle: every snapshot file must be accounted for in the rendered
    /// map, either named on its own line or absorbed into an elision count.
    fn accounted_files(rendered: &str) -> usize {
        let mut named = 0usize;
        let mut elided = 0usize;
        for line in rendered.lines() {
            if !line.starts_with("- ") {
                continue;
            }
            if let Some(rest) = line.split("(+").nth(1) {
                let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
                elided += digits.parse::<usize>().unwrap_or(0);
            } else if line.contains(", r") {
                named += 1;
            }
        }
        named + elided
    }

    fn meta(size: u64, rev: u64) -> FileMeta {
        FileMeta {
            size,
            digest: String::new(),
            last_revision: rev,
        }
    }

    fn p(s: &str) -> BusPath {
        BusPath::parse(s).unwrap()
    }

    fn skeleton_dirs() -> Vec<BusPath> {
        ["paper_analysis", "submission", "agent", "agent/experiments"]
            .iter()
            .map(|s| p(s))
            .collect()
    }

    fn snapshot(files: Vec<(BusPath, FileMeta)>, extra_dirs: Vec<BusPath>) -> TreeSnapshot {
        let mut dirs = skeleton_dirs();
        for (path, _) in &files {
            let mut cur = path.parent();
            while let Some(d) = cur {
                cur = d.parent();
                if !dirs.contains(&d) {
                    dirs.push(d);
                }
            }
        }
        dirs.extend(extra_dirs);
        dirs.sort();
        dirs.dedup();
        TreeSnapshot {
            files,
            dirs,
            revision: 9,
        }
    }

    #[test]
    fn small_tree_lists_every_file_and_all_region_headings() {
        let snap = snapshot(
            vec![
                (p("paper_analysis/metrics.md"), meta(412, 3)),
                (p("submission/main.py"), meta(2048, 5)),
                (p("agent/plan.md"), meta(100, 2)),
            ],
            vec![],
        );
        let regions = RegionConfig::default_config();
        let rendered = render_map(&snap, &regions, MapOptions::default());

        for heading in ["## paper_analysis/", "## submission/", "## agent/"] {
            assert!(rendered.contains(heading), "missing {heading}\n{rendered}");
        }
        for file in [
            "paper_analysis/metrics.md",
            "submission/main.py",
            "agent/plan.md",
        ] {
            assert_eq!(rendered.matches(file).count(), 1, "{file}\n{rendered}");
        }
        assert!(rendered.contains("(2.0 KiB, r5)"));
        assert!(rendered.contains("revision 9"));
        assert!(rendered.contains("agent/experiments/ (empty dir)"));
        assert_eq!(accounted_files(&rendered), 3);
    }

    #[test]
    fn empty_regions_say_so() {
        let snap = snapshot(vec![(p("agent/plan.md"), meta(1, 1))], vec![]);
        let regions = RegionConfig::default_config();
        let rendered = render_map(&snap, &regions, MapOptions::default());
        let submission_section: Vec<&str> = rendered
            .split("## submission/")
            .nth(1)
            .unwrap()
            .lines()
            .take(2)
            .collect();
        assert!(submission_section[1].contains("(empty)"), "{rendered}");
    }

    #[test]
    fn deep_tree_respects_cap_and_preserves_counts() {
        let mut files = Vec::new();
        for shard in 0..10 {
            for run in 0..10 {
                for item in 0..5 {
                    files.push((
                        p(&format!(
                            "agent/experiments/shard{shard}/run{run}/item{item}.json"
                        )),
                        meta(100 + item, shard * 10 + run),
                    ));
                }
            }
        }
        assert_eq!(files.len(), 500);
        files.sort_by(|a, b| a.0.cmp(&b.0));
        let snap = snapshot(files, vec![]);
        let regions = RegionConfig::default_config();
        let opts = MapOptions { cap_bytes: 8 * 1024 };
        let rendered = render_map(&snap, &regions, opts);

        assert!(
            rendered.len() <= opts.cap_bytes,
            "map is {} bytes",
            rendered.len()
        );
        assert_eq!(accounted_files(&rendered), 500, "{rendered}");
        for heading in ["## paper_analysis/", "## submission/", "## agent/"] {
            assert!(rendered.contains(heading));
        }
    }

    #[test]
    fn rendering_is_deterministic_under_input_order() {
        let mut files = vec![
            (p("submission/b.py"), meta(10, 1)),
            (p("submission/a.py"), meta(20, 2)),
            (p("agent/notes/z.md"), meta(30, 3)),
            (p("agent/notes/a.md"), meta(40, 4)),
        ];
        let regions = RegionConfig::default_config();
        let first = render_map(&snapshot(files.clone(), vec![]), &regions, MapOptions::default());
        files.reverse();
        let second =
            render_map(&snapshot(files, vec![]), &regions, MapOptions::default());
        assert_eq!(first, second);
    }

    #[test]
    fn elision_prefers_deepest_directories() {
        let mut files = Vec::new();
        for i in 0..40 {
            files.push((
                p(&format!("agent/experiments/deep/nested/f{i:02}.txt")),
                meta(50, 1),
            ));
        }
        files.push((p("agent/plan.md"), meta(10, 1)));
        files.push((p("submission/main.py"), meta(10, 1)));
        let snap = snapshot(files, vec![]);
        let regions = RegionConfig::default_config();
        let full = render_map(&snap, &regions, MapOptions { cap_bytes: 1 << 20 });
        let tight_cap = full.len() - 200;
        let tight = render_map(&snap, &regions, MapOptions { cap_bytes: tight_cap });

        assert!(tight.contains("agent/experiments/deep/nested/ (+40 files"));
        assert!(tight.contains("agent/plan.md"));
        assert!(tight.contains("submission/main.py"));
        assert_eq!(accounted_files(&tight), 42);
    }

    proptest! {
        #[test]
        fn any_tree_any_cap_accounts_for_every_file(
            paths in proptest::collection::btree_set(
                (0usize..3, 0usize..4, 0usize..6).prop_map(|(region, sub, name)| {
                    let region = ["paper_analysis", "submission", "agent"][region];
                    match sub {
                        0 => format!("{region}/f{name}.md"),
                        s => format!("{region}/d{s}/sub{}/f{name}.md", name % 2),
                    }
                }),
                1..60,
            ),
            cap in 400usize..3000,
        ) {
            let files: Vec<(BusPath, FileMeta)> = paths
                .iter()
                .enumerate()
                .map(|(i, path)| (p(path), meta(i as u64 * 7, i as u64)))
                .collect();
            let total = files.len();
            let snap = snapshot(files, vec![]);
            let regions = RegionConfig::default_config();
            let rendered = render_map(&snap, &regions, MapOptions { cap_bytes: cap });

            prop_assert_eq!(accounted_files(&rendered), total);
            for heading in ["## paper_analysis/", "## submission/", "## agent/"] {
                prop_assert!(rendered.contains(heading));
            }
            // The cap binds unless the map is already fully collapsed.
            if rendered.len() > cap {
                let floor = {
                    let mut entries = super::initial_entries(&snap);
                    while super::elide_one(&mut entries) {}
                    super::render(&snap, &regions, &entries)
                };
                prop_assert_eq!(rendered, floor);
            }
        }
    }
}
