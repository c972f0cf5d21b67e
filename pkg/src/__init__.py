# SpanProto - Source package
