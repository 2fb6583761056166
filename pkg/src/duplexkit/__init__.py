"""duplexkit: a deterministic full-duplex spoken-dialogue protocol engine,
scripted-scenario simulator, behavior scorer, training-data builder, and
composite reward scorer."""

from .core import (
    AUDIO_CODEBOOK_SIZE,
    AUDIO_TOKENS_PER_CHUNK,
    CHUNK_SECONDS,
    ChunkRecord,
    Control,
    DuplexLog,
    FrameLabel,
    ModelSlot,
    SlotKind,
    TimeBase,
    Token,
    TokenKind,
    UserFrame,
    Violation,
    audio_token,
    deserialize_log,
    frames_from_encoder,
    serialize_log,
    speak_slot,
    text_token,
    validate_log,
)
from .datagen import (
    DEFAULT_POSTTRAIN_RECIPES,
    InterleavedSample,
    Modality,
    QaTriplet,
    Role,
    SampleInputs,
    Scale,
    Segment,
    TaskRecipe,
    TtsRecord,
    apply_recipe,
    build_interleaved,
    build_pseudo_dialogue,
    build_qa_triplets,
    make_qa_triplet,
    sample_mixture,
    segment_transcript,
    stratified_sample,
)
from .engine import (
    EngineState,
    IllegalDecision,
    Mode,
    Observation,
    PolicyDecision,
    run_session,
    step,
)
from .metrics import (
    BehaviorOutcome,
    MetricsReport,
    MissingAnnotations,
    aggregate,
    score_backchanneling,
    score_interruption,
    score_log,
    score_pause_handling,
    score_turn_taking,
)
from .policies import ExternalPolicy, oracle_policy, random_policy, threshold_policy
from .reward import (
    ExternalJudge,
    JudgeVerdict,
    ModelOutput,
    RewardBreakdown,
    StubJudge,
    parse_output,
    score_accuracy,
    score_format,
    score_total,
    score_with_judge,
)
from .simulator import (
    Behavior,
    InfeasibleConfig,
    ReactionWindow,
    Scenario,
    ScenarioEvent,
    SuiteConfig,
    frames_of,
    generate_suite,
    run,
    run_suite,
)

__version__ = "0.1.0"
