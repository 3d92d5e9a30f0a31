"""Unit tests for the hjb_actor_critic package."""

import logging

logging.disable(logging.INFO)
