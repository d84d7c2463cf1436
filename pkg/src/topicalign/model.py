"""Topic model assembly: Dirichlet-posterior encoder, text decoder (linear
or embedding-factorized), optional author decoder, and the training
objective with its gradient path.

The sampling step and the KL term live outside the tensor graph (they need
Dirichlet-specific derivatives), so both are attached to the posterior
tensor as custom backward bridges: the sample via implicit
reparameterization of the underlying Gamma draws, the KL via its
closed-form gradient in the concentrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dirichlet as dr

VARIANTS = ("dvae", "etm", "fantom_l", "fantom_a", "fantom", "ctm-input")

CKPT_FORMAT = "topic-model"
CKPT_VERSION = 1


def variant_uses_labels(variant):
    return variant in ("fantom_l", "fantom")


def variant_uses_authors(variant):
    """Variants whose objective reconstructs authors when the corpus has
    them. The embedding variant joins in so that topics, words, and
    authors share one embedding space (the author decoder is then
    factorized through it); this extension beyond the dual-decoder
    variants is this library's construction."""
    return variant in ("fantom_a", "fantom", "etm")


def variant_uses_embeddings(variant):
    return variant == "etm"


def variant_uses_dense_input(variant):
    return variant == "ctm-input"


@dataclass
class FrozenNoise:
    """Replayable randomness for gradient checks: one dropout mask for the
    encoder and one uniform per Gamma draw, both fixed across evaluations."""

    dropout_mask: np.ndarray
    uniforms: np.ndarray


@dataclass
class ForwardOutput:
    posterior: ad.Tensor  # B x K concentrations, strictly positive
    z: ad.Tensor  # B x K simplex rows
    doc_logprobs: ad.Tensor  # B x V
    author_logprobs: ad.Tensor | None  # B x |A| when the variant decodes authors
    gamma_draws: np.ndarray | None


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _check_finite(tensor, where):
    if not np.all(np.isfinite(tensor.data)):
        raise FloatingPointError(f"non-finite activation after {where}")


class TopicModel:
    """Holds all parameters for one variant and runs forward passes."""

    def __init__(
        self,
        variant,
        n_words,
        n_topics,
        n_authors=0,
        hidden=512,
        keep_prob=0.25,
        embed_dim=300,
        n_features=None,
        word_embeddings=None,
        scale_batchnorm=False,
        posterior_init=0.02,
        seed=0,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if variant_uses_dense_input(variant) and not n_features:
            raise ValueError("ctm-input variant needs n_features")
        self.variant = variant
        self.n_words = int(n_words)
        self.n_topics = int(n_topics)
        self.n_authors = int(n_authors)
        self.hidden = int(hidden)
        self.keep_prob = float(keep_prob)
        self.embed_dim = int(embed_dim)
        self.n_features = int(n_features) if n_features else None
        self.scale_batchnorm = bool(scale_batchnorm)

        rng = np.random.default_rng(seed)
        in_dim = self.n_features if variant_uses_dense_input(variant) else self.n_words
        self.in_dim = in_dim
        k, v, h = self.n_topics, self.n_words, self.hidden

        self.enc1 = ad.LayerParams(_glorot(rng, h, in_dim), np.zeros(h), name="enc1")
        self.enc2 = ad.LayerParams(_glorot(rng, k, h), np.zeros(k), name="enc2")
        self.bn_enc = ad.BatchNormState(k, scale=scale_batchnorm, name="bn_enc")
        # Start the posterior at the prior's concentration scale: with the
        # batchnorm output roughly standard normal, the shift sets the median
        # concentration to softplus(shift). Leaving it at zero parks the
        # posterior near softplus(0) ~ 0.69, a long optimizer journey away
        # from the sparse prior for short training budgets.
        if posterior_init is not None:
            if posterior_init <= 0:
                raise ValueError("posterior_init must be positive")
            self.bn_enc.shift.data[:] = np.log(np.expm1(float(posterior_init)))

        if variant_uses_embeddings(variant):
            self.topic_embed = ad.parameter(_glorot(rng, k, self.embed_dim), name="topic_embed")
            if word_embeddings is not None:
                emb = np.asarray(word_embeddings, dtype=np.float64)
                if emb.shape != (v, self.embed_dim):
                    raise ValueError(f"word embeddings shape {emb.shape} != {(v, self.embed_dim)}")
                self.word_embed = ad.parameter(emb.copy(), name="word_embed")
            else:
                self.word_embed = ad.parameter(_glorot(rng, v, self.embed_dim), name="word_embed")
            self.dec = None
        else:
            self.dec = ad.LayerParams(_glorot(rng, v, k), np.zeros(v), name="dec")
            self.topic_embed = None
            self.word_embed = None
        self.bn_dec = ad.BatchNormState(v, scale=scale_batchnorm, name="bn_dec")

        self.dec_author = None
        self.author_embed = None
        self.bn_author = None
        if variant_uses_authors(variant) and self.n_authors > 0:
            if variant_uses_embeddings(variant):
                self.author_embed = ad.parameter(
                    _glorot(rng, self.n_authors, self.embed_dim), name="author_embed"
                )
            else:
                self.dec_author = ad.LayerParams(
                    _glorot(rng, self.n_authors, k), np.zeros(self.n_authors), name="dec_author"
                )
            self.bn_author = ad.BatchNormState(self.n_authors, scale=scale_batchnorm, name="bn_author")

    @property
    def has_author_decoder(self):
        return self.dec_author is not None or self.author_embed is not None

    def parameters(self):
        out = self.enc1.tensors() + self.enc2.tensors() + self.bn_enc.tensors()
        if self.dec is not None:
            out += self.dec.tensors()
        else:
            out += [self.topic_embed, self.word_embed]
        out += self.bn_dec.tensors()
        if self.dec_author is not None:
            out += self.dec_author.tensors() + self.bn_author.tensors()
        elif self.author_embed is not None:
            out += [self.author_embed] + self.bn_author.tensors()
        return out

    # ---- forward pieces --------------------------------------------------

    def encode(self, x, training, rng=None, dropout_mask=None):
        """Posterior concentrations: Softplus(BatchNorm(L2 . dropout(ReLU(L1 . x)))).

        Pass ``rng`` for fresh dropout noise or ``dropout_mask`` to replay a
        frozen one; eval mode needs neither.
        """
        x = x if isinstance(x, ad.Tensor) else ad.constant(x)
        if x.data.shape[-1] != self.in_dim:
            raise ValueError(f"encoder input width {x.data.shape[-1]} != expected {self.in_dim}")
        h = ad.relu(ad.affine(x, self.enc1))
        _check_finite(h, "encoder layer 1 (relu)")
        if training and self.keep_prob < 1.0:
            if dropout_mask is not None:
                h = ad.dropout_with_mask(h, dropout_mask, self.keep_prob)
            else:
                h = ad.dropout(h, self.keep_prob, training=True, rng=rng)
        pre = ad.batch_norm(ad.affine(h, self.enc2), self.bn_enc, training)
        conc = ad.softplus(pre)
        _check_finite(conc, "encoder layer 2 (batchnorm/softplus)")
        return conc

    def decode_doc(self, z, training):
        z = z if isinstance(z, ad.Tensor) else ad.constant(z)
        if self.dec is not None:
            scores = ad.affine(z, self.dec)
        else:
            scores = ad.matmul(ad.matmul(z, self.topic_embed), self.word_embed, transpose_b=True)
        return ad.log_softmax(ad.batch_norm(scores, self.bn_dec, training))

    def decode_author(self, z, training):
        if not self.has_author_decoder:
            raise ValueError(f"variant {self.variant!r} has no author decoder")
        z = z if isinstance(z, ad.Tensor) else ad.constant(z)
        if self.dec_author is not None:
            scores = ad.affine(z, self.dec_author)
        else:
            scores = ad.matmul(ad.matmul(z, self.topic_embed), self.author_embed, transpose_b=True)
        return ad.log_softmax(ad.batch_norm(scores, self.bn_author, training))

    # ---- sampling bridge -------------------------------------------------

    def sample_z(self, posterior, rng=None, frozen_uniforms=None, mode="sample"):
        """Draw z from Dir(posterior) inside the gradient graph.

        mode "sample" uses fresh Gamma draws (or the inverse CDF of
        ``frozen_uniforms`` when given); mode "mean" uses the deterministic
        Dirichlet mean, for validation passes.
        """
        alpha = posterior.data
        if mode == "mean":
            z = dr.mean(alpha)
            total = alpha.sum(axis=-1, keepdims=True)

            def bwd_mean(g):
                # d z_j / d alpha_i = (delta_ij - z_j) / total
                inner = (g * z).sum(axis=-1, keepdims=True)
                posterior._accumulate((g - inner) / total)

            return ad.Tensor(z, _parents=(posterior,), _backward=bwd_mean, _op="dirichlet_mean"), None
        if frozen_uniforms is not None:
            z, draws = dr.sample_from_uniforms(alpha, frozen_uniforms)
        else:
            z, draws = dr.sample(alpha, rng)

        def bwd(g):
            posterior._accumulate(dr.backprop_sample(alpha, z, draws, g))

        return ad.Tensor(z, _parents=(posterior,), _backward=bwd, _op="dirichlet_sample"), draws

    def kl_term(self, posterior, gamma):
        """Batch-mean KL(Dir(posterior) || Dir(gamma)) attached to the graph."""
        alpha = posterior.data
        gamma = np.asarray(gamma, dtype=np.float64)
        if gamma.shape != alpha.shape:
            raise ValueError(f"gamma shape {gamma.shape} != posterior shape {alpha.shape}")
        vals = dr.kl(alpha, gamma)
        batch = alpha.shape[0]

        def bwd(g):
            posterior._accumulate(g.item() / batch * dr.kl_grad_posterior(alpha, gamma))

        node = ad.Tensor(vals.mean(), _parents=(posterior,), _backward=bwd, _op="dirichlet_kl")
        return node, vals

    # ---- full objective ----------------------------------------------------

    def forward(self, x_in, training, rng=None, noise: FrozenNoise | None = None, z_mode="sample"):
        mask = noise.dropout_mask if noise is not None else None
        uniforms = noise.uniforms if noise is not None else None
        posterior = self.encode(x_in, training, rng=rng, dropout_mask=mask)
        z, draws = self.sample_z(posterior, rng=rng, frozen_uniforms=uniforms, mode=z_mode)
        doc_lp = self.decode_doc(z, training)
        auth_lp = self.decode_author(z, training) if self.has_author_decoder else None
        return ForwardOutput(posterior, z, doc_lp, auth_lp, draws)

    def loss(self, x_counts, author_multihot, fwd: ForwardOutput, gamma, beta):
        """Batch-mean objective: doc NLL (+ author NLL) + beta * KL(posterior || gamma).

        Returns (loss tensor, components dict of plain floats).
        """
        x_counts = np.asarray(x_counts, dtype=np.float64)
        batch = x_counts.shape[0]
        if x_counts.shape != fwd.doc_logprobs.data.shape:
            raise ValueError(f"counts shape {x_counts.shape} != decoder shape {fwd.doc_logprobs.data.shape}")
        doc_nll = ad.mul(ad.tsum(ad.mul(ad.constant(x_counts), fwd.doc_logprobs)), -1.0 / batch)
        total = doc_nll
        auth_val = 0.0
        if fwd.author_logprobs is not None and author_multihot is not None:
            author_multihot = np.asarray(author_multihot, dtype=np.float64)
            if author_multihot.shape != fwd.author_logprobs.data.shape:
                raise ValueError(
                    f"author shape {author_multihot.shape} != decoder shape {fwd.author_logprobs.data.shape}"
                )
            auth_nll = ad.mul(ad.tsum(ad.mul(ad.constant(author_multihot), fwd.author_logprobs)), -1.0 / batch)
            total = ad.add(total, auth_nll)
            auth_val = auth_nll.data.item()
        kl_node, kl_vals = self.kl_term(fwd.posterior, gamma)
        total = ad.add(total, ad.mul(kl_node, beta))
        components = {
            "doc_nll": doc_nll.data.item(),
            "auth_nll": auth_val,
            "kl": float(kl_vals.mean()),
        }
        return total, components

    # ---- derived read-only views -------------------------------------------

    def topic_word_matrix(self):
        """K x V rows: softmax of each topic's effective decoder response (eval mode)."""
        eye = np.eye(self.n_topics)
        logp = self.decode_doc(ad.constant(eye), training=False)
        return np.exp(logp.data)

    def topic_author_matrix(self):
        """K x |A| rows: softmax author response per one-hot topic (eval mode)."""
        if not self.has_author_decoder:
            raise ValueError(f"variant {self.variant!r} has no author decoder")
        eye = np.eye(self.n_topics)
        logp = self.decode_author(ad.constant(eye), training=False)
        return np.exp(logp.data)

    # ---- persistence ---------------------------------------------------------

    def named_arrays(self):
        """Every parameter plus batchnorm running statistics, name -> array view."""
        out = {
            "enc1.weight": self.enc1.weight.data,
            "enc1.bias": self.enc1.bias.data,
            "enc2.weight": self.enc2.weight.data,
            "enc2.bias": self.enc2.bias.data,
        }

        def bn(state, prefix):
            out[f"{prefix}.shift"] = state.shift.data
            if state.scale is not None:
                out[f"{prefix}.scale"] = state.scale.data
            out[f"{prefix}.running_mean"] = state.running_mean
            out[f"{prefix}.running_var"] = state.running_var

        bn(self.bn_enc, "bn_enc")
        if self.dec is not None:
            out["dec.weight"] = self.dec.weight.data
            out["dec.bias"] = self.dec.bias.data
        else:
            out["topic_embed"] = self.topic_embed.data
            out["word_embed"] = self.word_embed.data
        bn(self.bn_dec, "bn_dec")
        if self.dec_author is not None:
            out["dec_author.weight"] = self.dec_author.weight.data
            out["dec_author.bias"] = self.dec_author.bias.data
        elif self.author_embed is not None:
            out["author_embed"] = self.author_embed.data
        if self.has_author_decoder:
            bn(self.bn_author, "bn_author")
        return out


def save_model(model: TopicModel, path):
    """JSON header line + named flat float64 (little-endian) arrays."""
    arrays = model.named_arrays()
    header = {
        "format": CKPT_FORMAT,
        "version": CKPT_VERSION,
        "variant": model.variant,
        "n_words": model.n_words,
        "n_topics": model.n_topics,
        "n_authors": model.n_authors,
        "hidden": model.hidden,
        "embed_dim": model.embed_dim,
        "n_features": model.n_features,
        "keep_prob": model.keep_prob,
        "scale_batchnorm": model.scale_batchnorm,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_model(path) -> TopicModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CKPT_FORMAT:
            raise ValueError(f"{path}: not a {CKPT_FORMAT} checkpoint")
        if header.get("version") != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
        model = TopicModel(
            header["variant"],
            header["n_words"],
            header["n_topics"],
            n_authors=header["n_authors"],
            hidden=header["hidden"],
            keep_prob=header["keep_prob"],
            embed_dim=header["embed_dim"],
            n_features=header["n_features"],
            scale_batchnorm=header["scale_batchnorm"],
            seed=0,
        )
        arrays = model.named_arrays()
        for spec in header["arrays"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if name not in arrays:
                raise ValueError(f"{path}: unexpected array {name!r}")
            target = arrays[name]
            if target.shape != shape:
                raise ValueError(f"{path}: {name} shape {shape} != model shape {target.shape}")
            raw = fh.read(target.size * 8)
            if len(raw) != target.size * 8:
                raise ValueError(f"{path}: truncated array {name!r}")
            target[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return model
