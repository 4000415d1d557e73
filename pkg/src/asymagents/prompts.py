"""Versioned registry of prompt templates.

Every template except the answer judge is an original in-house text (origin
"original"); the judge prompt reproduces a published evaluation prompt
verbatim (origin "published"). Rendered prompts begin with a bracketed header
naming the agent, phase, turn, and recursion depth — this makes replay-script
cue matching and log auditing unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: str
    origin: str  # "original" | "published"
    text: str

    def render(self, **kwargs) -> str:
        return self.text.format(**kwargs)


def make_header(agent: str, phase: str, turn: int, depth: int = 0) -> str:
    return f"[agent={agent} phase={phase} turn={turn} depth={depth}]"


_TEMPLATES = [
    PromptTemplate(
        name="system",
        version="1",
        origin="original",
        text=(
            "You are the personal agent of {owner}. You chat with other agents on "
            "{owner}'s behalf. You may rely only on {owner}'s own message history "
            "and on what the other agent tells you in this conversation."
        ),
    ),
    PromptTemplate(
        name="system_privacy",
        version="1",
        origin="original",
        text=(
            "You are the personal agent of {owner}. You chat with other agents on "
            "{owner}'s behalf. You may rely only on {owner}'s own message history "
            "and on what the other agent tells you in this conversation. Protect "
            "privacy in everything you say: refer to uninvolved people as "
            "'somebody' and to places as 'somewhere', and disclose only the entity "
            "details strictly required by the task."
        ),
    ),
    PromptTemplate(
        name="plan",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "Task question: {question}\n"
            "Before talking to the other agent, list every piece of information you "
            "will need in order to answer the question. Write one line per item, "
            "exactly in this form:\n"
            "- [UNKNOWN] <description of the needed information>\n"
        ),
    ),
    PromptTemplate(
        name="think",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "{system}\n"
            "Task question: {question}\n\n"
            "Your plan so far:\n{plan}\n\n"
            "Conversation so far:\n{transcript}\n"
            "{evidence}"
            "\nDecide your next move. Reply with these sections (omit unused ones):\n"
            "PLAN-UPDATE:\n"
            "- [KNOWN: <value>] <plan item description>\n"
            "CLEAR-QUERY: keywords=<comma separated>; window=<int>; limit=<int>\n"
            "FUZZY-QUERY: text=<query text>; topk=<int>\n"
            "INTENT: ask | inform | conclude | recurse <neighbor>: <question for them>\n"
        ),
    ),
    PromptTemplate(
        name="act",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "{system}\n"
            "Task question: {question}\n\n"
            "Your plan so far:\n{plan}\n\n"
            "Conversation so far:\n{transcript}\n\n"
            "Retrieved from {owner}'s message history:\n{retrieval}\n\n"
            "Write your next chat message to the other agent. Reply with the message "
            "text only.\n"
        ),
    ),
    PromptTemplate(
        name="summarize",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "Summarize the following chat session objectively in a few sentences. "
            "Keep concrete facts: who, what, when.\n\n{session_text}\n"
        ),
    ),
    PromptTemplate(
        name="reason",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "Question: {question}\n"
            "Information agreed on by both agents:\n{rationales}\n"
            "Answer the question directly and concisely.\n"
        ),
    ),
    PromptTemplate(
        name="judge",
        version="1",
        origin="published",
        text=(
            "You are an experienced human labeler for reading comprehension tasks.\n"
            "Given a ground truth answer and a model prediction,\n"
            "you have to judge whether the model prediction is correct.\n"
            "The question is {question}.\n"
            "The ground truth answer is {ground_truth}.\n"
            "The model prediction is {prediction}.\n"
            "Return 1 if the model prediction is correct else 0.\n"
            "the model prediction may be a little different on the expression, "
            "as long as the meaning or key entity is correct, the answer can be "
            "regarded as correct."
        ),
    ),
    PromptTemplate(
        name="dialogue",
        version="1",
        origin="original",
        text=(
            "{header}\n"
            "Write a chat between {person1} and {person2} in which each states their "
            "full schedule for today. Facts to cover:\n{facts}\n"
            "For activities they share, other participants may be named; for "
            "activities only one of them attends, never name other participants. "
            "Format every line as '{person1} to {person2}: <text>' or "
            "'{person2} to {person1}: <text>'.\n"
        ),
    ),
]

REGISTRY: dict[str, PromptTemplate] = {t.name: t for t in _TEMPLATES}


def get(name: str) -> PromptTemplate:
    if name not in REGISTRY:
        raise KeyError(f"unknown prompt template {name!r}")
    return REGISTRY[name]
