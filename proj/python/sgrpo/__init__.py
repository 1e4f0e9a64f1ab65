"""Stepwise-reward RFT lab: python bindings over the C++ core."""

from ._core import (  # noqa: F401
    EvalReport,
    ParsedResponse,
    Policy,
    RougeScore,
    RunConfig,
    SgrpoError,
    StepRewardBreakdown,
    World,
    clipped_surrogate,
    default_config,
    discounted_return,
    eval_oracle,
    gen_world,
    gen_world_seeded,
    kl_per_token,
    load_policy,
    make_policy,
    normalize_advantages,
    parse_config,
    parse_response,
    reason_score,
    rouge_l,
    rouge_n,
    step_reward,
    tokenize,
    train_and_eval,
)

__all__ = [
    "EvalReport",
    "ParsedResponse",
    "Policy",
    "RougeScore",
    "RunConfig",
    "SgrpoError",
    "StepRewardBreakdown",
    "World",
    "clipped_surrogate",
    "default_config",
    "discounted_return",
    "eval_oracle",
    "gen_world",
    "gen_world_seeded",
    "kl_per_token",
    "load_policy",
    "make_policy",
    "normalize_advantages",
    "parse_config",
    "parse_response",
    "reason_score",
    "rouge_l",
    "rouge_n",
    "step_reward",
    "tokenize",
    "train_and_eval",
]
