"""Detect machine-generated text from how little a language model edits
it when asked to rewrite it.

Typical offline use:

    from rewritedetect import (
        MockRewriter, builtin_catalog, extract_features, predict, train,
    )

    catalog = builtin_catalog()
    rewriter = MockRewriter()
    vector = extract_features("some text", "invariance", catalog, rewriter)
"""

from .corpus import (
    Document,
    SplitSpec,
    length_buckets,
    load_corpus,
    save_corpus,
    split,
    synth_corpus,
)
from .errors import (
    AuthError,
    BlankDocument,
    DegenerateLabels,
    DuplicateId,
    EmptyCompletion,
    EmptyInput,
    InsufficientData,
    MissingVariant,
    NonFiniteLoss,
    OverlapDetected,
    ParseError,
    RateLimited,
    RewriteDetectError,
    SchemaMismatch,
    StratumTooSmall,
    TransportError,
    VersionMismatch,
    ZeroVariance,
)
from .evaluation import (
    EvalReport,
    TTestResult,
    f1_report,
    render_table,
    run_adaptive,
    run_in_domain,
    run_ood,
    serialize_report,
    welch_t_test,
)
from .features import (
    FeatureVector,
    RewriteRecord,
    extract_equivariance,
    extract_features,
    extract_invariance,
    extract_uncertainty,
    featurize_corpus,
    read_features,
    write_features,
)
from .llm import (
    CachingRewriter,
    ChatCompletionClient,
    CompletionRequest,
    CompletionResponse,
    EndpointConfig,
    MockRewriter,
    MockRewriterConfig,
    RemoteRewriter,
    ResponseCache,
    identity_rewriter,
    strip_wrapper,
)
from .metrics import (
    bag_of_ngrams_overlap,
    levenshtein_distance,
    levenshtein_similarity,
    tokenize,
)
from .model import (
    DetectorModel,
    Prediction,
    TrainConfig,
    load_model,
    predict,
    save_model,
    train,
)
from .prompts import (
    EquivariancePair,
    PromptCatalog,
    RewritePrompt,
    builtin_catalog,
    compose,
    load_catalog,
    save_catalog,
)

__version__ = "0.1.0"
