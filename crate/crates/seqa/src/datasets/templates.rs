//! Rewrites interrogative instances into declarative prompt prefixes.
//!
//! Each dataset has its own rule set: COPA appends a causal connective to
//! the premise, SCT needs no rewriting (the story itself is the prompt),
//! SocialIQA matches six fixed question patterns with a positionally
//! extracted subject, and CosmosQA fronts an adverbial clause split off at
//! a temporal/conditional connective. Questions no rule covers fall back to
//! a plain `Q:`/`A:` frame, flagged so fallback rates can be reported.

use serde::{Deserialize, Serialize};

use crate::datasets::{AsksFor, Dataset, Example};

/// A declarative prefix ending where the answer text begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewrittenPrompt {
    pub prompt: String,
    pub template_id: String,
    pub fallback_used: bool,
}

fn join_nonempty(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn capitalize_first(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut done = false;
    for c in text.chars() {
        if !done && c.is_alphabetic() {
            out.extend(c.to_uppercase());
            done = true;
        } else {
            out.push(c);
        }
    }
    out
}

fn lowercase_first(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut done = false;
    for c in text.chars() {
        if !done && c.is_alphabetic() {
            out.extend(c.to_lowercase());
            done = true;
        } else {
            out.push(c);
        }
    }
    out
}

fn ends_with_terminal(text: &str) -> bool {
    text.trim_end().ends_with(['.', '!', '?'])
}

/// Rewrite an example's interrogative into a declarative prompt prefix.
/// Total: every example gets a prompt, via the fallback frame if no
/// dataset template matches.
pub fn rewrite_question(example: &Example) -> RewrittenPrompt {
    match example.dataset {
        Dataset::Copa => rewrite_copa(example),
        Dataset::Sct => RewrittenPrompt {
            prompt: example.context.trim().to_string(),
            template_id: "sct-context".into(),
            fallback_used: false,
        },
        Dataset::SocialIqa => rewrite_socialiqa(example),
        Dataset::CosmosQa => rewrite_cosmosqa(example),
    }
}

fn fallback(example: &Example) -> RewrittenPrompt {
    RewrittenPrompt {
        prompt: join_nonempty(&[&example.context, "Q:", example.question.trim(), "A:"]),
        template_id: "fallback-qa".into(),
        fallback_used: true,
    }
}

fn rewrite_copa(example: &Example) -> RewrittenPrompt {
    let premise = example.context.trim();
    let (connective, template_id) = match example.asks_for {
        Some(AsksFor::Cause) => ("because", "copa-because"),
        Some(AsksFor::Effect) => ("so", "copa-so"),
        None => return fallback(example),
    };
    let stem = premise.strip_suffix('.').unwrap_or(premise).trim_end();
    RewrittenPrompt {
        prompt: format!("{stem} {connective}"),
        template_id: template_id.into(),
        fallback_used: false,
    }
}

// ---------------------------------------------------------------------------
// SocialIQA
// ---------------------------------------------------------------------------

/// (question prefix, question suffix, clause with `{}` for the subject, id).
/// Order matters: "What will … want to do next?" must win over
/// "What will … do next?".
const SOCIALIQA_PATTERNS: &[(&str, &str, &str, &str)] = &[
    ("What will ", " want to do next?", "As a result, {} wanted to", "siqa-want-next"),
    ("How would ", " feel as a result?", "As a result, {} felt", "siqa-feel-result"),
    ("What will ", " do next?", "{} then", "siqa-do-next"),
    ("How would you describe ", "?", "{} is seen as", "siqa-describe"),
    ("Why did ", " do that?", "Before, {} wanted", "siqa-why"),
    ("What does ", " need to do before?", "Before, {} needed to", "siqa-need-before"),
];

fn match_between<'a>(text: &'a str, prefix: &str, suffix: &str) -> Option<&'a str> {
    if text.len() < prefix.len() + suffix.len() {
        return None;
    }
    let (head_end, tail_start) = (prefix.len(), text.len() - suffix.len());
    if !text.is_char_boundary(head_end) || !text.is_char_boundary(tail_start) {
        return None;
    }
    if !text[..head_end].eq_ignore_ascii_case(prefix)
        || !text[tail_start..].eq_ignore_ascii_case(suffix)
    {
        return None;
    }
    let middle = text[head_end..tail_start].trim();
    (!middle.is_empty()).then_some(middle)
}

fn rewrite_socialiqa(example: &Example) -> RewrittenPrompt {
    let question = example.question.trim();
    for (prefix, suffix, clause_pattern, template_id) in SOCIALIQA_PATTERNS {
        if let Some(subject) = match_between(question, prefix, suffix) {
            let clause = clause_pattern.replace("{}", subject);
            return RewrittenPrompt {
                prompt: join_nonempty(&[&example.context, &clause]),
                template_id: (*template_id).into(),
                fallback_used: false,
            };
        }
    }
    fallback(example)
}

// ---------------------------------------------------------------------------
// CosmosQA
// ---------------------------------------------------------------------------

/// Words that open the fronted adverbial clause.
const CLAUSE_CONNECTIVES: &[&str] = &["after", "when", "if"];

/// Auxiliaries/modals: a "What …" question whose second word is one of
/// these has no leading noun (it asks "What may happen …", not
/// "What reason …").
const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "will",
    "would", "can", "could", "may", "might", "must", "shall", "should", "has", "have", "had",
];

fn connective_index(tokens: &[&str], start: usize) -> Option<usize> {
    (start..tokens.len()).find(|&i| {
        let word = tokens[i].to_lowercase();
        CLAUSE_CONNECTIVES.contains(&word.as_str())
            || (word == "in" && tokens.get(i + 1).is_some_and(|t| t.eq_ignore_ascii_case("case")))
    })
}

fn rewrite_cosmosqa(example: &Example) -> RewrittenPrompt {
    let question = example.question.trim();
    let Some(core) = question.strip_suffix('?') else {
        return fallback(example);
    };
    let tokens: Vec<&str> = core.split_whitespace().collect();
    if tokens.len() < 2 {
        return fallback(example);
    }

    let first = tokens[0].to_lowercase();
    let rewritten = if first == "why" {
        // Why [SENTENCE] [CLAUSE] ? -> [CLAUSE] , [SENTENCE] because
        connective_index(&tokens, 2).map(|split| {
            let sentence = tokens[1..split].join(" ");
            let clause = capitalize_first(&tokens[split..].join(" "));
            (format!("{clause} , {sentence} because"), "cosmos-why")
        })
    } else if first == "what" {
        let second = tokens[1].to_lowercase();
        if AUXILIARIES.contains(&second.as_str()) {
            // What [SENTENCE] [CLAUSE] ? -> [CLAUSE] , it [SENTENCE] that
            connective_index(&tokens, 2).map(|split| {
                let sentence = tokens[1..split].join(" ");
                let clause = capitalize_first(&tokens[split..].join(" "));
                (format!("{clause} , it {sentence} that"), "cosmos-what")
            })
        } else {
            // What [NOUN] [SENTENCE] [CLAUSE] ?
            //   -> [CLAUSE] , the [NOUN] [SENTENCE] is that
            connective_index(&tokens, 3).map(|split| {
                let noun = tokens[1];
                let sentence = tokens[2..split].join(" ");
                let clause = capitalize_first(&tokens[split..].join(" "));
                (format!("{clause} , the {noun} {sentence} is that"), "cosmos-what-noun")
            })
        }
    } else {
        None
    };

    match rewritten {
        Some((clause, template_id)) => RewrittenPrompt {
            prompt: join_nonempty(&[&example.context, &clause]),
            template_id: template_id.into(),
            fallback_used: false,
        },
        None => fallback(example),
    }
}

// ---------------------------------------------------------------------------
// Statement assembly
// ---------------------------------------------------------------------------

/// The choice text as it continues the prompt: first letter lowercased when
/// the prompt runs straight into it mid-sentence, untouched otherwise (and
/// always untouched under the fallback frame).
pub fn continuation_text(prompt: &RewrittenPrompt, choice: &str) -> String {
    let choice = choice.trim();
    if prompt.fallback_used || ends_with_terminal(&prompt.prompt) {
        choice.to_string()
    } else {
        lowercase_first(choice)
    }
}

/// The full declarative statement: prompt + adjusted choice, closed with a
/// period when no sentence terminator is present. Fallback prompts
/// concatenate unchanged — they are not sentences.
pub fn statement(prompt: &RewrittenPrompt, choice: &str) -> String {
    let joined = format!("{} {}", prompt.prompt, continuation_text(prompt, choice));
    if prompt.fallback_used || ends_with_terminal(&joined) {
        joined
    } else {
        format!("{joined}.")
    }
}
