use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::answer::ANSWER_FENCE;
use super::{AgentConfig, AgentError, ChatMessage};
use crate::eval::BugReport;
use crate::tools::ToolName;

/// Workflow hints per step, each tied to the tool it needs (or none).
const SEARCH_HINTS: [(Option<ToolName>, &str); 4] = [
    (Some(ToolName::SearchFile), "Use search_file to test whether a file named after a keyword, class or component exists."),
    (Some(ToolName::SearchMethod), "When the report names a method (for example in a stack trace), use search_method to find the files that define it."),
    (None, "If a guessed file or method does not exist, revise the guess and try variations."),
    (Some(ToolName::GetCandidateFilenames), "When the report gives no clear lead, call get_candidate_filenames for {k} files whose content resembles the report, and prefer those that fit its keywords and behaviour."),
];

const INSPECT_HINTS: [(Option<ToolName>, &str); 3] = [
    (Some(ToolName::GetMethodSignaturesOfAFile), "For promising files, list their methods with get_method_signatures_of_a_file and look for names or data handling that match the report."),
    (Some(ToolName::GetMethodBody), "Read suspicious implementations with get_method_body."),
    (None, "Check whether the logic you read could produce the reported symptoms."),
];

fn hints(out: &mut String, hints: &[(Option<ToolName>, &str)], tools: &BTreeSet<ToolName>, candidates: usize) {
    for (tool, text) in hints {
        if tool.is_none_or(|t| tools.contains(&t)) {
            let _ = writeln!(out, "   - {}", text.replace("{k}", &candidates.to_string()));
        }
    }
}

/// The system message: role, workflow, tools and answer format.
pub fn system_prompt(config: &AgentConfig, tools: &BTreeSet<ToolName>, candidates: usize) -> String {
    let n = config.final_list_size;
    let max = config.max_iterations;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "You are a senior software engineer who specializes in fault localization. Given a bug report for a {lang} \
         code base, find the {lang} source files most likely to contain the defect.",
        lang = config.language
    );
    let _ = writeln!(
        out,
        "\nYou can call {count} tools to explore the code base. Work step by step: reason about what you know, call a \
         tool, study the result and adapt your plan to what worked and what did not. Stop when you can give a \
         justified ranking of the {n} most relevant files, or when you reach the limit of {max} iterations. Each of \
         your replies is one iteration. In iteration {max} you must give your final answer however uncertain you are.",
        count = tools.len()
    );
    out.push_str("\nWorkflow\n");
    out.push_str("1. Read the report.\n");
    out.push_str("   - Pick out keywords, error messages, class and method names and other hints from the summary and description.\n");
    out.push_str(
        "   - Decide which parts of the system (user interface, persistence, networking, ...) are involved.\n",
    );
    if tools.contains(&ToolName::SearchFile)
        || tools.contains(&ToolName::SearchMethod)
        || tools.contains(&ToolName::GetCandidateFilenames)
    {
        out.push_str("2. Search.\n");
        hints(&mut out, &SEARCH_HINTS, tools, candidates);
    }
    out.push_str("3. Inspect methods.\n");
    hints(&mut out, &INSPECT_HINTS, tools, candidates);
    out.push_str("4. Rank.\n");
    out.push_str("   - Order files by how well their names, methods and code fit the report.\n");
    out.push_str("   - If you are unsure, go back to an earlier step with new assumptions.\n");
    out.push_str("5. Answer.\n");
    let _ = writeln!(out, "   - List the {n} files most likely to contain the bug, most likely first.");
    out.push_str("   - Copy each path exactly as the tools printed it, without changing case or shortening it.\n");
    out.push_str("   - Give each file a short reason tied to the report.\n");
    if !tools.is_empty() {
        out.push_str("\nTools\n");
        for t in tools {
            let _ = writeln!(out, "- {t}: {}", t.description());
        }
    }
    let _ = writeln!(
        out,
        "\nFinal answer format: a fenced block tagged `{ANSWER_FENCE}` with one file per line, for example\n\
         ```{ANSWER_FENCE}\n1. path/to/First.java - why it is relevant\n2. path/to/Second.java - why it is relevant\n```"
    );
    out
}

/// The user message carrying the bug report.
pub fn bug_message(bug: &BugReport) -> String {
    format!("Bug report\n\nSummary:\n{}\n\nDescription:\n{}\n", bug.summary.trim(), bug.description.trim())
}

pub fn forced_answer_message(config: &AgentConfig) -> String {
    format!(
        "This is iteration {} of {}, the last one. No more tools are available. Give your final ranked list of up to \
         {} files now, in the `{ANSWER_FENCE}` block format.",
        config.max_iterations, config.max_iterations, config.final_list_size
    )
}

pub fn corrective_message(config: &AgentConfig) -> String {
    format!(
        "Your answer did not contain a ranked file list I could read. Reply with up to {} files inside a fenced \
         `{ANSWER_FENCE}` block, one per line as `N. path - reason`.",
        config.final_list_size
    )
}

/// System prompt followed by the bug report.
pub fn build_prompt(
    bug: &BugReport,
    config: &AgentConfig,
    tools: &BTreeSet<ToolName>,
    candidates: usize,
) -> Result<Vec<ChatMessage>, AgentError> {
    if bug.is_blank() {
        return Err(AgentError::EmptyBug(bug.bug_id.clone()));
    }
    let enabled: BTreeSet<ToolName> = tools.intersection(&config.tool_whitelist).copied().collect();
    Ok(vec![ChatMessage::system(system_prompt(config, &enabled, candidates)), ChatMessage::user(bug_message(bug))])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bug(summary: &str, description: &str) -> BugReport {
        BugReport { bug_id: "1".into(), summary: summary.into(), description: description.into(), ..Default::default() }
    }

    fn all() -> BTreeSet<ToolName> {
        ToolName::ALL.into()
    }

    #[test]
    fn role_framing_and_limits() {
        let msgs = build_prompt(&bug("s", "d"), &AgentConfig::default(), &all(), 50).unwrap();
        assert_eq!(msgs.len(), 2);
        assert!(msgs[0].content.contains("fault localization"));
        assert!(msgs[0].content.contains("10 most relevant files"));
        assert!(msgs[0].content.contains("10 iterations"));
        assert!(msgs[0].content.contains("50 files"));
        for t in ToolName::ALL {
            assert!(msgs[0].content.contains(t.as_str()));
        }
    }

    #[test]
    fn whitelist_filters_tools() {
        let mut config = AgentConfig::default();
        config.tool_whitelist.remove(&ToolName::GetCandidateFilenames);
        let msgs = build_prompt(&bug("s", "d"), &config, &all(), 50).unwrap();
        assert!(!msgs[0].content.contains("get_candidate_filenames"));
        assert!(msgs[0].content.contains("search_method"));
    }

    #[test]
    fn summary_only() {
        let msgs = build_prompt(&bug("Crash on zoom", ""), &AgentConfig::default(), &all(), 50).unwrap();
        assert!(msgs[1].content.contains("Crash on zoom"));
        assert!(msgs[1].content.ends_with("Description:\n\n"));
    }

    #[test]
    fn blank_bug_rejected() {
        assert!(matches!(
            build_prompt(&bug(" ", ""), &AgentConfig::default(), &all(), 50),
            Err(AgentError::EmptyBug(_))
        ));
    }
}
