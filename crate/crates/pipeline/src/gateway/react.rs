//! The research agent's Thought / Action / Observation loop.

use super::{ChatRole, GatewayError, Message, Session};

pub(super) fn protocol() -> String {
    "\n\nYou can use tools. To call one, reply with exactly two lines:\n\
     Action: web_search or read_url\n\
     Action Input: <search query>, or <url> followed by the question to answer from that page\n\
     You will receive the result as an Observation. When you are done, reply with\n\
     Final Answer: <your complete answer in the requested format>\n"
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Step {
    Final(String),
    Act { tool: String, input: String },
}

/// Reads one agent reply. A reply without an action is taken as final.
pub(super) fn parse_step(text: &str) -> Step {
    if let Some(pos) = text.find("Final Answer:") {
        return Step::Final(text[pos + "Final Answer:".len()..].trim().to_string());
    }
    let mut tool = None;
    let mut input = None;
    for line in text.lines() {
        let l = line.trim();
        if let Some(rest) = l.strip_prefix("Action Input:") {
            input = Some(rest.trim().to_string());
        } else if let Some(rest) = l.strip_prefix("Action:") {
            tool = Some(rest.trim().to_string());
        }
    }
    match tool {
        Some(tool) => Step::Act {
            tool,
            input: input.unwrap_or_default(),
        },
        None => Step::Final(text.trim().to_string()),
    }
}

pub(super) fn run_loop(
    session: &mut Session<'_>,
    messages: &mut Vec<Message>,
    budget: usize,
) -> Result<String, GatewayError> {
    loop {
        let reply = session.chat(messages, false)?;
        match parse_step(&reply) {
            Step::Final(answer) => return Ok(answer),
            Step::Act { tool, input } => {
                if session.usage.steps >= budget {
                    session.transcript.section("budget exhausted", &format!("{budget} steps"));
                    return Err(GatewayError::BudgetExhausted {
                        budget,
                        transcript_ref: String::new(),
                    });
                }
                session.usage.steps += 1;
                let tools = &session.gateway.tools;
                let observation = match tool.as_str() {
                    "web_search" => tools.web_search(&input),
                    "read_url" => {
                        let (url, question) = input.split_once(char::is_whitespace).unwrap_or((&input, ""));
                        tools.read_url(url, question.trim())
                    }
                    other => Err(format!("unknown tool {other}; use web_search or read_url")),
                }
                .unwrap_or_else(|e| format!("Tool error: {e}"));
                messages.push(Message::new(ChatRole::Assistant, reply));
                let obs = Message::new(ChatRole::User, format!("Observation: {observation}"));
                session.transcript.message(&obs);
                messages.push(obs);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_parse() {
        assert_eq!(
            parse_step("Thought: look\nAction: web_search\nAction Input: gdp q3"),
            Step::Act {
                tool: "web_search".into(),
                input: "gdp q3".into()
            }
        );
        assert_eq!(parse_step("x\nFinal Answer: 42"), Step::Final("42".into()));
        assert_eq!(parse_step("plain answer"), Step::Final("plain answer".into()));
    }
}
