"""
Prompt vocabulary

Whitespace tokenization over a small fixed vocabulary; the learnable embedding
table lives in the denoiser.
"""

from typing import List, Sequence, Union

import torch
from pydantic import BaseModel, Field

from ..utils.errors import ConfigError, VocabularyError


class Vocabulary(BaseModel):
    """Ordered token list; a token's id is its position"""
    tokens: List[str] = Field(default_factory=list, description="Tokens in id order")

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise VocabularyError(f"Unknown token: {token!r}", token=token) from None

    def add(self, token: str) -> int:
        if token in self.tokens:
            raise VocabularyError(f"Token already present: {token!r}", token=token)
        self.tokens.append(token)
        return len(self.tokens) - 1

    def tokenize(self, prompt: str) -> List[int]:
        words = prompt.split()
        if not words:
            raise ConfigError("Prompt must contain at least one token")
        return [self.index(w) for w in words]

    def to_ids(self, prompt: Union[str, Sequence[int], torch.Tensor]) -> torch.Tensor:
        """Prompt text or raw ids -> validated LongTensor of shape (s,)"""
        if isinstance(prompt, str):
            return torch.tensor(self.tokenize(prompt), dtype=torch.long)
        ids = torch.as_tensor(prompt, dtype=torch.long).reshape(-1)
        if ids.numel() == 0:
            raise ConfigError("Prompt must contain at least one token")
        bad = [i for i in ids.tolist() if not 0 <= i < len(self.tokens)]
        if bad:
            raise VocabularyError(f"Token ids outside vocabulary of size {len(self.tokens)}: {bad}")
        return ids
