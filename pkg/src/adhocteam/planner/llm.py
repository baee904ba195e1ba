"""Chat-completion client and the reasoner that plans through it."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .context import PlannerContext
from .prompts import DEFAULT_TOKEN_BUDGET, build_prompt, count_tokens
from .reasoner import ReasonerError, Verdict
from .subtasks import PlanSyntaxError, SubSkill, SubTask

API_KEY_ENV = "ADHOC_LLM_API_KEY"
DEFAULT_TEMPERATURE = 0.3
DEFAULT_MODEL = "gpt-4-1106-preview"
SYSTEM_PROMPT = "You are a planning module for a household robot. Follow the output format exactly."
REMINDER = ("Your previous answer could not be parsed. End your answer with a single line that "
            "starts with 'Plan:' and follows the output format.")

_PLAN = re.compile(r"^\s*Plan\s*:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE)


def extract_plan(reply: str) -> str:
    found = _PLAN.findall(reply or "")
    if not found:
        raise PlanSyntaxError("reply has no 'Plan:' line")
    return found[-1].strip()


def parse_subtasks(text: str) -> list[SubTask]:
    out = [SubTask.parse(part) for part in text.split(";") if part.strip()]
    if not out:
        raise PlanSyntaxError("empty sub-task list")
    return out


def parse_ranking(text: str, n: int) -> list[int]:
    idx = [int(x) for x in re.findall(r"\d+", text)]
    if sorted(idx) != list(range(1, n + 1)):
        raise PlanSyntaxError(f"ranking {text!r} is not a permutation of 1..{n}")
    return [i - 1 for i in idx]


def parse_verdict(text: str) -> Verdict:
    t = text.strip()
    if t.lower().startswith("reasonable"):
        return Verdict(True)
    m = re.match(r"infeasible\s*(?:\((.*)\))?\s*$", t, re.IGNORECASE | re.DOTALL)
    if m:
        return Verdict(False, (m.group(1) or "").strip() or "unspecified")
    raise PlanSyntaxError(f"bad verdict {text!r}")


@dataclass
class LLMClient:
    """Minimal chat-completion client; one request per call, no streaming."""

    url: str
    model: str = DEFAULT_MODEL
    api_key: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    token_budget: int = DEFAULT_TOKEN_BUDGET
    max_tokens: int = 1024
    timeout: float = 10.0
    log_dir: str | None = None
    calls: int = 0
    _http: httpx.Client | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)

    @property
    def endpoint(self) -> str:
        base = self.url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/v1/chat/completions"

    def _client(self) -> httpx.Client:
        if self._http is None:
            self._http = httpx.Client(timeout=self.timeout)
        return self._http

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def chat(self, messages: list[dict]) -> str:
        prompt_tokens = sum(count_tokens(m["content"]) for m in messages)
        if prompt_tokens > self.token_budget:
            raise ReasonerError("parse", f"prompt of {prompt_tokens} tokens exceeds budget {self.token_budget}")
        body = {"model": self.model, "messages": messages, "temperature": self.temperature,
                "max_tokens": self.max_tokens}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self.calls += 1
        try:
            resp = self._client().post(self.endpoint, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ReasonerError("transport", str(exc) or type(exc).__name__) from exc
        if resp.status_code in (401, 403):
            raise ReasonerError("auth", f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ReasonerError("transport", f"HTTP {resp.status_code}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ReasonerError("parse", f"unexpected response body: {exc}") from exc
        self._log(messages, text)
        return text

    def _log(self, messages: list[dict], reply: str) -> None:
        if not self.log_dir:
            return
        path = Path(self.log_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"call_{self.calls:05d}.json").write_text(
            json.dumps({"messages": messages, "reply": reply}, indent=1))


class LLMReasoner:
    """Reasoner that renders a prompt per stage and parses the final ``Plan:`` line."""

    name = "llm"

    def __init__(self, client: LLMClient, retry_max: int = 1):
        self.client = client
        self.retry_max = retry_max
        self.errors: list[str] = []

    def _ask(self, bundle, parse):
        messages = [{"role": "system", "content": SYSTEM_PROMPT},
                    {"role": "user", "content": bundle.render()}]
        last = None
        for attempt in range(self.retry_max + 1):
            reply = self.client.chat(messages)
            try:
                return parse(extract_plan(reply))
            except (PlanSyntaxError, ValueError) as exc:
                last = exc
                messages = messages + [{"role": "assistant", "content": reply},
                                       {"role": "user", "content": REMINDER}]
        self.errors.append(f"parse: {last}")
        raise ReasonerError("parse", str(last))

    def _bundle(self, stage, ctx, extras, style="full"):
        # the system prompt and a possible retry reminder travel with the bundle
        reserve = count_tokens(SYSTEM_PROMPT) + count_tokens(REMINDER)
        return build_prompt(stage, ctx, extras, style=style, token_budget=self.client.token_budget - reserve)

    def propose(self, ctx: PlannerContext, n: int, prompt_style: str = "full") -> list[tuple[SubTask, str]]:
        bundle = self._bundle("generation", ctx, {"n": n}, prompt_style)
        subtasks = self._ask(bundle, parse_subtasks)
        return [(st, "llm") for st in subtasks[:n]]

    def rank(self, ctx: PlannerContext, candidates: list[SubTask]) -> list[tuple[SubTask, str]]:
        if len(candidates) <= 1:
            return [(c, "single candidate") for c in candidates]
        bundle = self._bundle("evaluation", ctx, {"candidates": [str(c) for c in candidates]})
        order = self._ask(bundle, lambda text: parse_ranking(text, len(candidates)))
        return [(candidates[i], "llm") for i in order]

    def judge(self, ctx: PlannerContext, candidate: SubTask, facts: list) -> Verdict:
        bundle = self._bundle("rejudging", ctx, {"subtask": str(candidate), "facts": facts})
        return self._ask(bundle, parse_verdict)

    def plan_subskill(self, ctx: PlannerContext, subtask: SubTask) -> tuple[SubSkill, str]:
        bundle = self._bundle("subskill", ctx, {"subtask": str(subtask)})
        return self._ask(bundle, SubSkill.parse), "llm"
