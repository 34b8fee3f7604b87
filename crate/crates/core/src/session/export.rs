//! The Stage-6 export bundle: the alignment model, the matching logs, the
//! diagnosis and a human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{io_err, write_atomic};
use super::{
    describe_verdict, Session, SessionError, StageStatus, TranscriptEntry, CANDIDATES_FILE,
    COVERAGE_FILE, DIAGNOSIS_FILE, MAPPINGS_FILE, STAGE_NAMES,
};
use crate::aligner::ALIGNMENT_FILE_NAME;
use crate::canonical::{sha256_hex, to_canonical_string};
use crate::diagnostic::Severity;

pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const SUMMARY_FILE: &str = "summary.md";

/// Every file in a bundle, in the order the summary lists them.
pub const BUNDLE_FILES: [&str; 7] = [
    ALIGNMENT_FILE_NAME,
    MAPPINGS_FILE,
    CANDIDATES_FILE,
    COVERAGE_FILE,
    DIAGNOSIS_FILE,
    TRANSCRIPT_FILE,
    SUMMARY_FILE,
];

/// SHA-256 of each bundle file, keyed by file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub files: BTreeMap<String, String>,
}

impl Session {
    pub(super) fn write_bundle(&self, out: &Path) -> Result<ExportManifest, SessionError> {
        let status = self.state.stages[5].status;
        if status != StageStatus::Confirmed {
            return Err(SessionError::Gating(format!(
                "cannot export: stage 5 (check) is {status}, not Confirmed"
            )));
        }
        fs::create_dir_all(out).map_err(io_err(out))?;

        let mut contents: BTreeMap<&str, String> = BTreeMap::new();
        for name in [
            ALIGNMENT_FILE_NAME,
            MAPPINGS_FILE,
            CANDIDATES_FILE,
            COVERAGE_FILE,
            DIAGNOSIS_FILE,
        ] {
            contents.insert(name, super::read_text(&self.dir.join(name))?);
        }
        // The export stage's own entries are left out so that exporting again
        // reproduces the same bundle.
        let transcript: Vec<&TranscriptEntry> = self
            .state
            .transcript()
            .into_iter()
            .filter(|e| e.stage < 6)
            .collect();
        contents.insert(TRANSCRIPT_FILE, to_canonical_string(&transcript));
        let digests: BTreeMap<String, String> = contents
            .iter()
            .map(|(name, text)| (name.to_string(), sha256_hex(text)))
            .collect();
        contents.insert(SUMMARY_FILE, self.render_summary(&digests)?);

        let mut files = BTreeMap::new();
        for (name, text) in &contents {
            write_atomic(&out.join(name), text)?;
            files.insert(name.to_string(), sha256_hex(text));
        }
        Ok(ExportManifest { files })
    }

    fn render_summary(&self, digests: &BTreeMap<String, String>) -> Result<String, SessionError> {
        let state = &self.state;
        let mappings = self.mappings()?;
        let coverage = self.coverage()?;
        let diagnosis = self.diagnosis()?;
        let alignment = super::read_text(&self.dir.join(ALIGNMENT_FILE_NAME))?;
        let package = alignment
            .lines()
            .find_map(|l| {
                l.trim()
                    .strip_prefix("package ")
                    .map(|r| r.trim_end_matches('{').trim().to_string())
            })
            .unwrap_or_default();

        let mut s = String::new();
        let _ = writeln!(s, "# Alignment summary: {package}\n");
        let _ = writeln!(s, "Session `{}`.\n", state.id);
        let _ = writeln!(s, "## Inputs\n");
        let _ = writeln!(s, "| Role | Snapshot | SHA-256 |\n|---|---|---|");
        let _ = writeln!(
            s,
            "| OEM | {} | {} |",
            state.inputs.oem.copy, state.inputs.oem.digest
        );
        let _ = writeln!(
            s,
            "| Supplier | {} | {} |",
            state.inputs.supplier.copy, state.inputs.supplier.digest
        );
        match &state.inputs.library {
            Some(l) => {
                let _ = writeln!(s, "| Extension library | {} | {} |", l.copy, l.digest);
            }
            None => {
                let _ = writeln!(s, "| Extension library | (bundled) | |");
            }
        }

        let _ = writeln!(s, "\n## Stages\n");
        let _ = writeln!(s, "| # | Stage | Status | Attempts |\n|---|---|---|---|");
        for stage in state.stages.iter().take(6) {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                stage.index, STAGE_NAMES[stage.index as usize], stage.status, stage.attempts
            );
        }

        let _ = writeln!(s, "\n## Decided mappings\n");
        let _ = writeln!(s, "| Source | Target | Tag | Construct | Confidence | Verdict |\n|---|---|---|---|---|---|");
        let mut decided: Vec<_> = mappings.iter().filter(|m| m.is_decided()).collect();
        decided.sort_by(|a, b| {
            (
                &a.candidate.source_qualified_name,
                &a.candidate.target_qualified_name,
            )
                .cmp(&(
                    &b.candidate.source_qualified_name,
                    &b.candidate.target_qualified_name,
                ))
        });
        for m in &decided {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:?} | {:.2} | {} |",
                m.candidate.source_qualified_name,
                m.candidate.target_qualified_name,
                m.effective_tag(),
                m.effective_construct(),
                m.candidate.confidence,
                describe_verdict(&m.verdict)
            );
        }
        let rejected = mappings.len() - decided.len();
        let _ = writeln!(
            s,
            "\n{} mapping(s) decided, {rejected} rejected.",
            decided.len()
        );

        let _ = writeln!(s, "\n## Coverage\n");
        let _ = writeln!(s, "| Model | Eligible | Matched | Explicitly unmatched | Unprocessed |\n|---|---|---|---|---|");
        for c in [&coverage.source, &coverage.target] {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                c.model,
                c.total_eligible,
                c.matched.len(),
                c.explicitly_unmatched.len(),
                c.unprocessed.len()
            );
        }
        if !state.acknowledged_unprocessed.is_empty() {
            let _ = writeln!(
                s,
                "\nUnprocessed elements acknowledged at confirmation: {}.",
                state.acknowledged_unprocessed.join(", ")
            );
        }

        let _ = writeln!(s, "\n## Diagnosis\n");
        if diagnosis.is_empty() {
            let _ = writeln!(s, "No issues found.");
        } else {
            let _ = writeln!(
                s,
                "{} error(s), {} warning(s), {} note(s).\n",
                diagnosis.count(Severity::Error),
                diagnosis.count(Severity::Warning),
                diagnosis.count(Severity::Info)
            );
            for item in &diagnosis.items {
                let _ = writeln!(s, "- {:?}: {}", item.category, item.diagnostic);
            }
        }

        let _ = writeln!(s, "\n## Files\n");
        let _ = writeln!(s, "| File | SHA-256 |\n|---|---|");
        for (name, digest) in digests {
            let _ = writeln!(s, "| {name} | {digest} |");
        }
        Ok(s)
    }
}
