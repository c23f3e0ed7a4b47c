# Error handling utilities
