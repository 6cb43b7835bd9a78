"""Escrow state machines for the five verification protocols.

Money is modeled as a closed ledger: party balances plus per-party escrow
holdings.  Every transition either moves nothing or applies the transfers
its rule mandates, so the total is invariant; tests fuzz this.  States
are immutable and step() is pure, so replaying a transition log always
reproduces the same terminal state.

Machines (stages in parentheses):

accuracy_simple   commit/commit, escrow/escrow, MC sends the full test
                  set, MP answers with proofs or aborts (costing the
                  consumer N*P), settle pays 2*N*Z on success or slashes
                  the provider's 2*N*E escrow.
accuracy_full     the split-audit variant: MP requests a random subset of
                  N1, may abort after seeing it for N1*P, then receives
                  the remaining N2; settlement pays 2*(N1*P + N2*Z).
serving           rounds of K predictions served without proofs; the
                  consumer may contest K1 of them during the round, the
                  provider answers with proofs; a failed contest costs
                  the consumer 2*K1*Z, a proven lie slashes the
                  provider's beta*K*Z escrow.
retrieval         hash-commit to a corpus, run the model, deliver the
                  positive class; a sample audit with any mismatch marks
                  the responder slashed.  No funds move.
data_transfer     the timeout-hardened delivery subprotocol: hashes of
                  encrypted inputs, encrypted payload, signed receipt,
                  key reveal, optional key contest.  Whoever stalls or
                  aborts out of turn forfeits their deposit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .econ import EconParams, as_fraction

MP = "MP"
MC = "MC"
ESCROW_SERVICE = "escrow_service"
PARTIES = (MP, MC, ESCROW_SERVICE)

KINDS = ("accuracy_simple", "accuracy_full", "serving", "retrieval", "data_transfer")

ACTIONS = (
    "commit", "escrow", "send_subset", "abort", "send_snarks",
    "contest", "acknowledge", "reveal_key", "settle", "timeout",
)

TERMINAL_STAGES = ("settled", "slashed_MP", "slashed_MC", "aborted")


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    actor: str
    action: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.actor not in PARTIES:
            raise ProtocolError(f"unknown actor {self.actor!r}")
        if self.action not in ACTIONS:
            raise ProtocolError(f"unknown action {self.action!r}")


@dataclass(frozen=True)
class LedgerEntry:
    src: str
    dst: str
    amount: Fraction
    rule: str


@dataclass(frozen=True)
class ProtocolState:
    kind: str
    stage: str
    params: EconParams
    balances: dict
    escrow: dict
    hashes: dict
    stake: Fraction
    accuracy: Fraction | None = None
    transfers: tuple = ()

    def total(self) -> Fraction:
        return sum(self.balances.values()) + sum(self.escrow.values()) + self.stake

    @property
    def terminal(self) -> bool:
        return self.stage in TERMINAL_STAGES


def new_session(kind: str, params: EconParams, funding: Fraction | None = None) -> ProtocolState:
    """Fresh session.  Accuracy sessions immediately lock the provider's
    Sybil stake of 1000 * N1 * E; it is released at any terminal stage."""
    if kind not in KINDS:
        raise ProtocolError(f"unknown protocol kind {kind!r}")
    if funding is None:
        funding = params.stake + 10 * (params.N * params.E + params.K * params.Z + 1)
    else:
        funding = as_fraction(funding)
    balances = {MP: funding, MC: funding, ESCROW_SERVICE: Fraction(0)}
    escrow = {MP: Fraction(0), MC: Fraction(0)}
    stake = Fraction(0)
    if kind in ("accuracy_simple", "accuracy_full"):
        stake = params.stake
        if balances[MP] < stake:
            raise ProtocolError("provider cannot cover the stake")
        balances[MP] -= stake
    return ProtocolState(
        kind=kind, stage="init", params=params,
        balances=balances, escrow=escrow, hashes={}, stake=stake,
    )


# --- ledger helpers (operate on the working copy inside step) ---------------

class _Work:
    def __init__(self, state: ProtocolState):
        self.state = state
        self.balances = dict(state.balances)
        self.escrow = dict(state.escrow)
        self.hashes = dict(state.hashes)
        self.stake = state.stake
        self.accuracy = state.accuracy
        self.transfers = list(state.transfers)

    def deposit(self, party: str, amount: Fraction, rule: str) -> None:
        if amount < 0:
            raise ProtocolError("negative deposit")
        if self.balances[party] < amount:
            raise ProtocolError(f"{party} cannot cover deposit of {amount}")
        self.balances[party] -= amount
        self.escrow[party] += amount
        self.transfers.append(LedgerEntry(party, f"escrow[{party}]", amount, rule))

    def fee(self, party: str, amount: Fraction, rule: str) -> None:
        if self.balances[party] < amount:
            raise ProtocolError(f"{party} cannot cover fee of {amount}")
        self.balances[party] -= amount
        self.balances[ESCROW_SERVICE] += amount
        self.transfers.append(LedgerEntry(party, ESCROW_SERVICE, amount, rule))

    def escrow_to(self, owner: str, to: str, amount: Fraction, rule: str) -> None:
        if self.escrow[owner] < amount:
            raise ProtocolError(f"escrow of {owner} cannot cover {amount}")
        self.escrow[owner] -= amount
        self.balances[to] += amount
        self.transfers.append(LedgerEntry(f"escrow[{owner}]", to, amount, rule))

    def refund_all(self, rule: str) -> None:
        for party in (MP, MC):
            amt = self.escrow[party]
            if amt:
                self.escrow_to(party, party, amt, rule)

    def release_stake(self, rule: str) -> None:
        if self.stake:
            self.balances[MP] += self.stake
            self.transfers.append(LedgerEntry("stake", MP, self.stake, rule))
            self.stake = Fraction(0)

    def finish(self, stage: str) -> ProtocolState:
        if stage in TERMINAL_STAGES:
            self.refund_all("terminal_refund")
            self.release_stake("stake_release")
        return replace(
            self.state,
            stage=stage,
            balances=self.balances,
            escrow=self.escrow,
            hashes=self.hashes,
            stake=self.stake,
            accuracy=self.accuracy,
            transfers=tuple(self.transfers),
        )


def _accuracy_from_results(w: _Work, t: Transition, expected_n: int) -> None:
    results = t.payload.get("results")
    if not isinstance(results, list) or not all(isinstance(r, bool) for r in results):
        raise ProtocolError("send_snarks payload needs results: list[bool]")
    if len(results) != expected_n:
        raise ProtocolError(f"expected {expected_n} results, got {len(results)}")
    w.accuracy = Fraction(sum(results), len(results))


def _expect_count(t: Transition, expected: int, what: str) -> None:
    n = t.payload.get("count")
    if n is not None and int(n) != expected:
        raise ProtocolError(f"{what}: expected {expected} examples, got {n}")


# --- transition tables -------------------------------------------------------
# Each entry: (stage, actor, action) -> handler(work, transition) -> new stage

def _handlers_accuracy(simple: bool):
    eps_rule = "escrow_fee"

    def h_commit_mp(w, t):
        w.hashes["weights"] = t.payload.get("hash", "")
        return "mp_committed"

    def h_commit_mc(w, t):
        w.hashes["test_set"] = t.payload.get("hash", "")
        return "committed"

    def h_escrow(party, next_stage):
        def h(w, t):
            p = w.state.params
            w.deposit(party, 2 * p.N * p.E, "escrow_2NE")
            w.fee(party, p.resolved_epsilon(), eps_rule)
            return next_stage
        return h

    table = {
        ("init", MP, "commit"): h_commit_mp,
        ("mp_committed", MC, "commit"): h_commit_mc,
        ("committed", MP, "escrow"): h_escrow(MP, "mp_escrowed"),
        ("mp_escrowed", MC, "escrow"): h_escrow(MC, "escrowed"),
    }

    if simple:
        def h_send_test(w, t):
            _expect_count(t, w.state.params.N, "test set")
            return "test_sent"

        def h_mp_abort(w, t):
            p = w.state.params
            w.escrow_to(MC, MP, p.N * p.P, "simple_abort_NP")
            return "aborted"

        def h_snarks(w, t):
            _accuracy_from_results(w, t, w.state.params.N)
            return "snarks_sent"

        def h_settle(w, t):
            p = w.state.params
            if w.accuracy >= p.accuracy_target:
                w.escrow_to(MC, MP, 2 * p.N * p.Z, "settle_pay_2NZ")
                return "settled"
            w.escrow_to(MP, MC, 2 * p.N * p.E, "slash_mp_2NE")
            return "slashed_MP"

        table.update({
            ("escrowed", MC, "send_subset"): h_send_test,
            ("test_sent", MP, "send_snarks"): h_snarks,
            ("test_sent", MP, "abort"): h_mp_abort,
            ("test_sent", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
            ("snarks_sent", ESCROW_SERVICE, "settle"): h_settle,
        })
        return table

    def h_request_subset(w, t):
        _expect_count(t, w.state.params.N1, "subset request")
        return "subset_requested"

    def h_send_subset(w, t):
        _expect_count(t, w.state.params.N1, "subset")
        return "subset_sent"

    def h_mp_abort_stage4(w, t):
        p = w.state.params
        w.escrow_to(MC, MP, p.N1 * p.P, "stage4_abort_N1P")
        return "aborted"

    def h_send_rest(w, t):
        _expect_count(t, w.state.params.N2, "remainder")
        return "full_set_sent"

    def h_snarks_full(w, t):
        _accuracy_from_results(w, t, w.state.params.N2)
        return "snarks_sent"

    def h_settle_full(w, t):
        p = w.state.params
        if w.accuracy >= p.accuracy_target:
            w.escrow_to(MC, MP, 2 * (p.N1 * p.P + p.N2 * p.Z), "stage7_settle_2(N1P+N2Z)")
            return "settled"
        w.escrow_to(MP, MC, 2 * p.N * p.E, "slash_mp_2NE")
        return "slashed_MP"

    table.update({
        ("escrowed", MP, "send_subset"): h_request_subset,
        ("subset_requested", MC, "send_subset"): h_send_subset,
        ("subset_requested", MC, "abort"): _slash(MC, "subset_abort_slash_mc"),
        ("subset_requested", MC, "timeout"): _slash(MC, "timeout_slash_mc"),
        ("subset_sent", MP, "acknowledge"): lambda w, t: "proceeding",
        ("subset_sent", MP, "abort"): h_mp_abort_stage4,
        ("subset_sent", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
        ("proceeding", MC, "send_subset"): h_send_rest,
        ("proceeding", MC, "timeout"): _slash(MC, "timeout_slash_mc"),
        ("full_set_sent", MP, "send_snarks"): h_snarks_full,
        ("full_set_sent", MP, "abort"): _slash(MP, "late_abort_slash_mp"),
        ("full_set_sent", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
        ("snarks_sent", ESCROW_SERVICE, "settle"): h_settle_full,
    })
    return table


def _slash(party: str, rule: str):
    """Forfeit the party's whole escrow to the counterparty."""
    other = MC if party == MP else MP

    def h(w, t):
        amt = w.escrow[party]
        if amt:
            w.escrow_to(party, other, amt, rule)
        return f"slashed_{party}"

    return h


def _handlers_serving():
    def h_escrow_mc(w, t):
        p = w.state.params
        w.deposit(MC, 2 * p.K * p.Z, "escrow_2KZ")
        return "mc_escrowed"

    def h_escrow_mp(w, t):
        p = w.state.params
        w.deposit(MP, p.beta * p.K * p.Z, "escrow_betaKZ")
        return "escrowed"

    def h_inputs(w, t):
        w.hashes["inputs"] = t.payload.get("hash", "")
        return "inputs_sent"

    def h_preds(w, t):
        _expect_count(t, w.state.params.K, "predictions")
        return "predictions_sent"

    def h_xy_hash(w, t):
        w.hashes["xy"] = t.payload.get("hash", "")
        return "round_open"

    def h_contest(w, t):
        return "contested"

    def h_round_settle(w, t):
        return "settled"

    def h_contest_snarks(w, t):
        p = w.state.params
        if t.payload.get("valid") is True:
            # proofs match the committed hashes: the contest fails
            w.escrow_to(MC, MP, 2 * p.K1 * p.Z, "failed_contest_2K1Z")
            return "settled"
        w.escrow_to(MP, MC, p.beta * p.K * p.Z, "slash_mp_betaKZ")
        return "slashed_MP"

    return {
        ("init", MC, "escrow"): h_escrow_mc,
        ("mc_escrowed", MP, "escrow"): h_escrow_mp,
        ("escrowed", MC, "commit"): h_inputs,
        ("inputs_sent", MP, "acknowledge"): lambda w, t: "inputs_acked",
        ("inputs_sent", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
        ("inputs_acked", MP, "send_subset"): h_preds,
        ("inputs_acked", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
        ("predictions_sent", MC, "commit"): h_xy_hash,
        ("predictions_sent", MC, "timeout"): _slash(MC, "timeout_slash_mc"),
        ("round_open", MC, "contest"): h_contest,
        ("round_open", ESCROW_SERVICE, "settle"): h_round_settle,
        ("contested", MP, "send_snarks"): h_contest_snarks,
        ("contested", MP, "timeout"): _slash(MP, "no_proofs_slash_mp"),
    }


def _handlers_retrieval():
    def h_commit(w, t):
        w.hashes["documents"] = t.payload.get("hash", "")
        return "committed"

    def h_audit(w, t):
        mism = int(t.payload.get("mismatches", 0))
        if mism < 0:
            raise ProtocolError("mismatches must be nonnegative")
        return "slashed_MP" if mism > 0 else "verified"

    return {
        ("init", MP, "commit"): h_commit,
        ("committed", MC, "send_subset"): lambda w, t: "model_sent",
        ("model_sent", MP, "send_snarks"): lambda w, t: "delivered",
        ("model_sent", MP, "timeout"): _slash(MP, "timeout_slash_mp"),
        ("delivered", MC, "contest"): h_audit,
        ("delivered", ESCROW_SERVICE, "settle"): lambda w, t: "settled",
        ("verified", ESCROW_SERVICE, "settle"): lambda w, t: "settled",
    }


def _handlers_data_transfer():
    def h_escrow(party, next_stage):
        def h(w, t):
            amount = as_fraction(t.payload.get("amount", 1))
            if amount <= 0:
                raise ProtocolError("deposit must be positive")
            w.deposit(party, amount, "dt_deposit")
            return next_stage
        return h

    def h_hashes(w, t):
        w.hashes["encrypted_inputs"] = t.payload.get("hash", "")
        return "hashes_sent"

    def h_key_contest(w, t):
        if "key_valid" not in t.payload:
            raise ProtocolError("contest payload needs key_valid: bool")
        if t.payload["key_valid"]:
            # contesting a valid key is itself a deviation
            return _slash(MP, "bogus_contest_slash_mp")(w, t)
        return _slash(MC, "bad_key_slash_mc")(w, t)

    return {
        ("init", MC, "escrow"): h_escrow(MC, "mc_escrowed"),
        ("mc_escrowed", MP, "escrow"): h_escrow(MP, "escrowed"),
        ("escrowed", MC, "commit"): h_hashes,
        ("escrowed", MC, "abort"): _slash(MC, "dt_stage1_slash_mc"),
        ("escrowed", MC, "timeout"): _slash(MC, "dt_stage1_slash_mc"),
        ("hashes_sent", MC, "send_subset"): lambda w, t: "data_sent",
        ("hashes_sent", MC, "abort"): _slash(MC, "dt_stage2_slash_mc"),
        ("hashes_sent", MC, "timeout"): _slash(MC, "dt_stage2_slash_mc"),
        ("data_sent", MP, "acknowledge"): lambda w, t: "acked",
        ("data_sent", MP, "timeout"): _slash(MP, "dt_stage3_slash_mp"),
        ("acked", MC, "reveal_key"): lambda w, t: "key_revealed",
        ("acked", MC, "abort"): _slash(MC, "dt_stage4_slash_mc"),
        ("acked", MC, "timeout"): _slash(MC, "dt_stage4_slash_mc"),
        ("key_revealed", MP, "acknowledge"): lambda w, t: "settled",
        ("key_revealed", MP, "contest"): h_key_contest,
        ("key_revealed", MP, "timeout"): _slash(MP, "dt_stage5_slash_mp"),
    }


_TABLES = {
    "accuracy_simple": _handlers_accuracy(simple=True),
    "accuracy_full": _handlers_accuracy(simple=False),
    "serving": _handlers_serving(),
    "retrieval": _handlers_retrieval(),
    "data_transfer": _handlers_data_transfer(),
}


def step(state: ProtocolState, t: Transition) -> ProtocolState:
    """Apply one transition; raises ProtocolError if it is not legal at
    the current stage (wrong stage, wrong actor, or after termination)."""
    if state.terminal:
        raise ProtocolError(f"session already terminal in stage {state.stage!r}")
    handler = _TABLES[state.kind].get((state.stage, t.actor, t.action))
    if handler is None:
        raise ProtocolError(
            f"illegal transition: {t.actor} cannot {t.action} at stage {state.stage!r} "
            f"of {state.kind}"
        )
    w = _Work(state)
    new_stage = handler(w, t)
    return w.finish(new_stage)


def run_log(state: ProtocolState, transitions) -> list[ProtocolState]:
    """Apply a transition log; returns the state after every step."""
    out = [state]
    for t in transitions:
        state = step(state, t)
        out.append(state)
    return out


def legal_transitions(state: ProtocolState, rng: random.Random) -> list[Transition]:
    """Concrete legal transitions at this state, payloads randomized.
    Used by the fuzz tests and simulations."""
    if state.terminal:
        return []
    p = state.params
    out = []
    for (stage, actor, action) in _TABLES[state.kind]:
        if stage != state.stage:
            continue
        payload: dict = {}
        if action == "commit":
            payload = {"hash": f"h{rng.randrange(1 << 30):08x}"}
        elif action == "send_subset":
            counts = {
                ("accuracy_simple", "escrowed"): p.N,
                ("accuracy_full", "escrowed"): p.N1,
                ("accuracy_full", "subset_requested"): p.N1,
                ("accuracy_full", "proceeding"): p.N2,
                ("serving", "inputs_acked"): p.K,
            }
            n = counts.get((state.kind, stage))
            payload = {"count": n} if n is not None else {}
        elif action == "send_snarks":
            if state.kind == "serving":
                payload = {"valid": rng.random() < 0.5}
            elif state.kind in ("accuracy_simple", "accuracy_full"):
                n = p.N if state.kind == "accuracy_simple" else p.N2
                payload = {"results": [rng.random() < 0.85 for _ in range(n)]}
        elif action == "contest":
            if state.kind == "retrieval":
                payload = {"mismatches": rng.choice([0, 0, 1, 3])}
            elif state.kind == "data_transfer":
                payload = {"key_valid": rng.random() < 0.5}
        elif action == "escrow" and state.kind == "data_transfer":
            payload = {"amount": rng.randint(1, 50)}
        out.append(Transition(actor=actor, action=action, payload=payload))
    return out


def evaluate_predictions(logits_list, labels) -> list[bool]:
    """Top-1 correctness flags for a batch of logit vectors."""
    out = []
    for logits, label in zip(logits_list, labels):
        vals = list(logits)
        out.append(vals.index(max(vals)) == int(label))
    return out
